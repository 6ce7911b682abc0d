#include "gymgrid/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace gymgrid {

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below: empty range");
  // 2^64 mod n; draws below it would bias the low residues.
  const std::uint64_t threshold = (std::uint64_t{0} - n) % n;
  std::uint64_t x = engine_();
  while (x < threshold) x = engine_();
  return x % n;
}

std::int64_t Rng::range(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw std::invalid_argument("Rng::range: hi < lo");
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(below(span));
}

double Rng::normal() {
  double u1 = uniform01();
  while (u1 <= 0.0) u1 = uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::restore(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (!is) throw std::invalid_argument("Rng::restore: malformed state");
}

}  // namespace gymgrid
