// Compiled with -ffast-math (see core/CMakeLists.txt) so the compiler can use
// the glibc vector math library for sinf/cosf. Only branch-free elementwise
// loops live here; inputs are validated by callers.

#include "tmlp/numerics.hpp"

namespace tmlp::numerics {

void sincos_batch(const float* z, float* s, float* c, index n, float omega) {
  for (index i = 0; i < n; ++i) {
    const float a = omega * z[i];
    s[i] = __builtin_sinf(a);
    c[i] = __builtin_cosf(a);
  }
}

void sincos_batch(const double* z, double* s, double* c, index n, double omega) {
  for (index i = 0; i < n; ++i) {
    const double a = omega * z[i];
    s[i] = __builtin_sin(a);
    c[i] = __builtin_cos(a);
  }
}

}  // namespace tmlp::numerics
