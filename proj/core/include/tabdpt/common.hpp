#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tabdpt {

/// Broad failure classes. The CLI maps them onto exit codes.
enum class ErrorKind { config, data, numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error config_error(const std::string& what) { return Error(ErrorKind::config, what); }
inline Error data_error(const std::string& what) { return Error(ErrorKind::data, what); }
inline Error numeric_error(const std::string& what) { return Error(ErrorKind::numeric, what); }

enum class TaskKind : std::uint8_t { classification = 0, regression = 1 };

inline std::string_view to_string(TaskKind kind) {
  return kind == TaskKind::classification ? "classification" : "regression";
}

inline TaskKind parse_task_kind(std::string_view s) {
  if (s == "classification") return TaskKind::classification;
  if (s == "regression") return TaskKind::regression;
  throw config_error("unknown task kind '" + std::string(s) + "'");
}

/// All stochastic components draw from this engine so runs are reproducible on a fixed platform.
using Rng = std::mt19937_64;

/// Uniform integer in [lo, hi] inclusive.
template <typename Int>
Int uniform_int(Rng& rng, Int lo, Int hi) {
  return std::uniform_int_distribution<Int>(lo, hi)(rng);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace tabdpt
