#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace ramac {

// Derives an independent stream seed from a master seed and a stream name.
// Stable across platforms; used so every consumer (batch sampling, actor
// noise, critic taus, hazards, eval) gets its own generator.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream);

// Thin deterministic generator. Gaussian draws use a cacheless Box-Muller so
// the full state is the engine state; serialize()/deserialize() round-trip it
// exactly for checkpointing.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t bits() { return eng_(); }

  // Uniform on the open interval (0,1).
  double uniform();
  double uniform(double lo, double hi);

  double normal();
  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  // Uniform index in [0, n).
  std::size_t index(std::size_t n);

  std::string serialize() const;
  void deserialize(const std::string& text);

 private:
  std::mt19937_64 eng_;
};

}  // namespace ramac
