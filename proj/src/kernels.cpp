#include "hintnart/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace hintnart::kernels {
namespace {

const Backend* find(const std::string& name) {
  if (name == "scalar") return &scalar_backend();
#if defined(__x86_64__) || defined(_M_X64)
  if (name == "avx2" && avx2_supported()) return &avx2_backend();
#endif
#if defined(__aarch64__)
  if (name == "neon") return &neon_backend();
#endif
  return nullptr;
}

const Backend* pick_default() {
  if (const char* env = std::getenv("HINTNART_KERNELS")) {
    if (const Backend* b = find(env)) return b;
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (avx2_supported()) return &avx2_backend();
#endif
#if defined(__aarch64__)
  return &neon_backend();
#endif
  return &scalar_backend();
}

const Backend*& slot() {
  static const Backend* current = pick_default();
  return current;
}

}  // namespace

const Backend& active() { return *slot(); }

bool select(const std::string& name) {
  if (const Backend* b = find(name)) {
    slot() = b;
    return true;
  }
  return false;
}

std::vector<std::string> available() {
  std::vector<std::string> names{"scalar"};
#if defined(__x86_64__) || defined(_M_X64)
  if (avx2_supported()) names.push_back("avx2");
#endif
#if defined(__aarch64__)
  names.push_back("neon");
#endif
  return names;
}

}  // namespace hintnart::kernels
