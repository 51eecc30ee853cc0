#include "ganmem/tensor.hpp"

#include <cmath>
#include <sstream>

namespace ganmem {

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ",";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

uint64_t fnv1a64(const void* bytes, size_t n, uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  uint64_t h = seed;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t tensor_hash(const Tensor& t, uint64_t seed) {
  uint64_t h = fnv1a64(t.data(), static_cast<size_t>(t.size()) * sizeof(double), seed);
  const auto& s = t.shape();
  return fnv1a64(s.data(), s.size() * sizeof(int), h);
}

}  // namespace ganmem
