#pragma once
#include <vector>

namespace qpt::detail {

// Odometer over k in Z^d with 0 < |k| <= k_max, visiting each +/- pair once
// (callers work with quantities symmetric under k -> -k, so only
// lexicographically positive k are scanned).
template <class F>
void scan_half_lattice(int d, int k_max, F&& fn) {
  std::vector<int> k(d, -k_max);
  for (;;) {
    bool positive = false;
    for (int i = 0; i < d; ++i) {
      if (k[i] > 0) {
        positive = true;
        break;
      }
      if (k[i] < 0) break;
    }
    if (positive) fn(k);
    int i = d - 1;
    for (; i >= 0; --i) {
      if (++k[i] <= k_max) break;
      k[i] = -k_max;
    }
    if (i < 0) break;
  }
}

}  // namespace qpt::detail
