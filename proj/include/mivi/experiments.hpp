#pragma once

#include "mivi/evaluation.hpp"
#include "mivi/models.hpp"
#include "mivi/random.hpp"
#include "mivi/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace mivi {

/// Invalid or missing configuration; key() names the offending entry.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message);
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Flat JSON configuration with dotted keys ("trainer.J", "model.alpha").
class Config {
 public:
  static Config load(const std::string& path);
  static Config from_json(nlohmann::json j, std::string base_dir = ".");

  const nlohmann::json& raw() const { return raw_; }
  std::string experiment() const;
  bool has(const std::string& key) const { return raw_.contains(key); }

  double number(const std::string& key, double fallback) const;
  int integer(const std::string& key, int fallback) const;
  std::uint64_t seed(const std::string& key, std::uint64_t fallback) const;
  bool boolean(const std::string& key, bool fallback) const;
  std::string string(const std::string& key, const std::string& fallback) const;
  std::vector<int> int_list(const std::string& key, std::vector<int> fallback) const;
  std::optional<Vec> vector(const std::string& key) const;
  /// A path relative to the config file's directory, or the fallback.
  std::string path(const std::string& key, const std::string& fallback) const;

  /// Throws ConfigError naming the first key not in `allowed`.
  void reject_unknown(const std::set<std::string>& allowed) const;

 private:
  nlohmann::json raw_;
  std::string base_dir_;
};

struct RunOptions {
  std::string out_dir;  // overrides the config's output_dir when set
  int threads = 1;
};

/// Runs the configured experiment, writes its artifacts and returns the
/// metrics that were written to metrics.json. Throws ConfigError,
/// DivergenceError or std::exception.
nlohmann::json run_experiment(const Config& config, const RunOptions& options);

/// Synthetic datasets from the documented generating processes.
std::vector<int> generate_nb_counts(RngStream& rng, int n = 1000, double r = 2.0, double p = 0.7);
struct LogisticData {
  Mat x;
  Vec y;
};
LogisticData generate_logistic_data(RngStream& rng, int n = 1000);

/// Writes the dataset for `experiment` ∈ {nb, logistic}.
void generate_dataset(const std::string& experiment, std::uint64_t seed, const std::string& path);

std::vector<int> read_counts(const std::string& path);
LogisticData read_logistic_data(const std::string& path);

/// Logging to stderr, filtered by MIVI_LOG_LEVEL ∈ {error, info, debug}.
enum class LogLevel { Error = 0, Info = 1, Debug = 2 };
LogLevel log_level();
void log_message(LogLevel level, const std::string& message);

/// Serializes a posterior summary as {"names", "variables": {name: {mean, sd,
/// q025, q975}}, "correlation"}.
nlohmann::json summary_json(const PosteriorSummary& s);

}  // namespace mivi
