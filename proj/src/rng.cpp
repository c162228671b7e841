#include "ramac/rng.hpp"

#include <cmath>
#include <sstream>

#include "ramac/errors.hpp"

namespace ramac {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::string_view stream) {
  std::uint64_t h = splitmix64(master);
  for (unsigned char c : stream) h = splitmix64(h ^ c);
  return h;
}

double Rng::uniform() {
  // 53-bit mantissa draw in [0,1); reject 0 to keep the interval open.
  double u;
  do {
    u = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  } while (u == 0.0);
  return u;
}

double Rng::uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

double Rng::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw ParamError("Rng::index: n must be positive");
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  std::uint64_t x;
  do {
    x = eng_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << eng_;
  return os.str();
}

void Rng::deserialize(const std::string& text) {
  std::istringstream is(text);
  is >> eng_;
  if (is.fail()) throw FormatError("Rng::deserialize: malformed engine state");
}

}  // namespace ramac
