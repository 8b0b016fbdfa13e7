#include "clbench/rng.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace clbench {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

uint64_t derive_seed(uint64_t master, std::string_view tag) {
  return splitmix64(master ^ fnv1a(tag));
}

uint64_t rand_below(Rng& rng, uint64_t n) {
  if (n == 0) throw std::invalid_argument("rand_below: n must be positive");
  // Rejection sampling over the largest multiple of n.
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

double rand_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double rand_normal(Rng& rng) {
  // Box-Muller; u1 in (0,1] to keep the log finite.
  double u1 = 1.0 - rand_unit(rng);
  double u2 = rand_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

void shuffle_indices(std::vector<int64_t>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rand_below(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

std::string rng_state_to_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng rng_from_string(const std::string& state) {
  Rng rng;
  std::istringstream is(state);
  is >> rng;
  if (is.fail()) throw std::runtime_error("rng_from_string: malformed state");
  return rng;
}

}  // namespace clbench
