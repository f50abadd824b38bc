#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace hadesfit {

/// One scramble round of the SplitMix64 generator. Bijective on 64-bit
/// integers, which makes it suitable for deriving collision-free seed
/// families from a single master seed.
std::uint64_t splitmix64(std::uint64_t x);

/// Derive an independent seed for a named stream ("signal", "observations",
/// "trials", ...) from a master seed. Distinct names give unrelated streams.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream);

/// Derive the `index`-th member of an indexed seed family (one per trial).
/// Distinct indices are guaranteed to produce distinct seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

/// Deterministic random number generator. The distributions are implemented
/// here instead of with std:: distribution adapters because the standard
/// leaves those implementation-defined; this keeps identical seeds producing
/// identical streams across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform01();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Log-uniform in [lo, hi); requires 0 < lo < hi.
  double log_uniform(double lo, double hi);
  /// Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double sd);
  /// Uniform integer in [0, n); unbiased.
  std::uint64_t below(std::uint64_t n);

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// Format a double with 17 significant digits (round-trip exact). Used by
/// every CSV and JSON report writer so that reruns are byte-comparable.
std::string format_double(double v);

/// Minimal CSV reader: splits on commas, trims surrounding whitespace and
/// carriage returns, skips blank lines. Field-level parsing stays with the
/// callers, which know the expected schema.
std::vector<std::vector<std::string>> read_csv(const std::string& path);

/// Parse a double with full error checking; `context` names the file/field
/// for the exception message.
double parse_double(const std::string& text, const std::string& context);

void write_text_file(const std::string& path, const std::string& content);

/// Run body(0..n-1) on up to `threads` worker threads (0 = hardware
/// concurrency). Work items must be independent; the call returns after all
/// items finish and rethrows the first exception raised by any item.
void parallel_for(std::size_t n, unsigned threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace hadesfit
