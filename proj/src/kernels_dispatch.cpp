// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <cstring>

#include "affect/kernels.hpp"

namespace affect::kernels {

const Backend& active() {
  static const Backend* selected = [] {
    const char* force = std::getenv("AFFECT_FORCE_SCALAR");
    if (force && std::strcmp(force, "0") != 0) return &scalar_backend();
#if defined(__x86_64__) || defined(_M_X64)
    if (avx2_supported()) return &avx2_backend();
#endif
    return &scalar_backend();
  }();
  return *selected;
}

}  // namespace affect::kernels
