#include "mivi/experiments.hpp"

#include "mivi/evaluation.hpp"
#include "mivi/gradcheck.hpp"
#include "mivi/io.hpp"
#include "mivi/linalg.hpp"
#include "mivi/trainer.hpp"
#include "mivi/transitions.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

namespace mivi {

namespace fs = std::filesystem;
using nlohmann::json;

ConfigError::ConfigError(std::string key, const std::string& message)
    : std::runtime_error(key.empty() ? message : key + ": " + message), key_(std::move(key)) {}

// ---------------------------------------------------------------------------
// Logging

LogLevel log_level() {
  const char* env = std::getenv("MIVI_LOG_LEVEL");
  if (!env) return LogLevel::Info;
  const std::string v(env);
  if (v == "error") return LogLevel::Error;
  if (v == "debug") return LogLevel::Debug;
  return LogLevel::Info;
}

void log_message(LogLevel level, const std::string& message) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  static const char* tags[] = {"error", "info", "debug"};
  std::cerr << "[mivi " << tags[static_cast<int>(level)] << "] " << message << '\n';
}

// ---------------------------------------------------------------------------
// Config

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("", "config '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(std::move(j), fs::path(path).parent_path().string());
}

Config Config::from_json(json j, std::string base_dir) {
  if (!j.is_object()) throw ConfigError("", "config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.value().is_object()) throw ConfigError(it.key(), "nested objects are not allowed; use dotted keys");
  }
  Config c;
  c.raw_ = std::move(j);
  c.base_dir_ = base_dir.empty() ? "." : std::move(base_dir);
  return c;
}

std::string Config::experiment() const {
  if (!has("experiment")) throw ConfigError("experiment", "missing");
  return string("experiment", "");
}

double Config::number(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const auto& v = raw_.at(key);
  if (!v.is_number()) throw ConfigError(key, "expected a number");
  return v.get<double>();
}

int Config::integer(const std::string& key, int fallback) const {
  if (!has(key)) return fallback;
  const auto& v = raw_.at(key);
  if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
  return v.get<int>();
}

std::uint64_t Config::seed(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const auto& v = raw_.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw ConfigError(key, "expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

bool Config::boolean(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const auto& v = raw_.at(key);
  if (!v.is_boolean()) throw ConfigError(key, "expected true or false");
  return v.get<bool>();
}

std::string Config::string(const std::string& key, const std::string& fallback) const {
  if (!has(key)) return fallback;
  const auto& v = raw_.at(key);
  if (!v.is_string()) throw ConfigError(key, "expected a string");
  return v.get<std::string>();
}

std::vector<int> Config::int_list(const std::string& key, std::vector<int> fallback) const {
  if (!has(key)) return fallback;
  const auto& v = raw_.at(key);
  if (!v.is_array()) throw ConfigError(key, "expected an array of integers");
  std::vector<int> out;
  for (const auto& e : v) {
    if (!e.is_number_integer()) throw ConfigError(key, "expected an array of integers");
    out.push_back(e.get<int>());
  }
  return out;
}

std::optional<Vec> Config::vector(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  const auto& v = raw_.at(key);
  if (!v.is_array()) throw ConfigError(key, "expected an array of numbers");
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ConfigError(key, "expected an array of numbers");
    out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
  }
  return out;
}

std::string Config::path(const std::string& key, const std::string& fallback) const {
  if (!has(key)) return fallback;
  const fs::path p(string(key, ""));
  if (p.is_absolute()) return p.string();
  return (fs::path(base_dir_) / p).string();
}

void Config::reject_unknown(const std::set<std::string>& allowed) const {
  for (auto it = raw_.begin(); it != raw_.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError(it.key(), "unknown key");
  }
}

// ---------------------------------------------------------------------------
// Data

std::vector<int> generate_nb_counts(RngStream& rng, int n, double r, double p) {
  // Gamma-Poisson mixture: λ ~ Gamma(r, rate (1-p)/p), x ~ Poisson(λ), so that
  // p(x) ∝ Γ(x+r)/(Γ(r) x!) pˣ (1-p)ʳ.
  std::vector<int> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(rng.poisson(rng.gamma(r, (1.0 - p) / p)));
  return out;
}

LogisticData generate_logistic_data(RngStream& rng, int n) {
  Mat cov = Mat::Identity(4, 4);
  cov(0, 1) = cov(1, 0) = -0.8;
  cov(2, 3) = cov(3, 2) = 0.9;
  const Mat l = cov.llt().matrixL();
  Vec beta(4);
  beta << -2.0, -1.0, 1.0, 2.0;
  LogisticData d;
  d.x.resize(n, 4);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    d.x.row(i) = (l * rng.normal_vec(4)).transpose();
    const double prob = 1.0 / (1.0 + std::exp(-d.x.row(i).dot(beta)));
    d.y[i] = rng.uniform() < prob ? 1.0 : 0.0;
  }
  return d;
}

void generate_dataset(const std::string& experiment, std::uint64_t seed, const std::string& path) {
  RngStream rng(seed, 0);
  if (experiment == "nb") {
    const auto counts = generate_nb_counts(rng);
    Mat rows(static_cast<Eigen::Index>(counts.size()), 1);
    for (std::size_t i = 0; i < counts.size(); ++i) rows(static_cast<Eigen::Index>(i), 0) = counts[i];
    write_csv(path, {"x"}, rows);
  } else if (experiment == "logistic") {
    const LogisticData d = generate_logistic_data(rng);
    Mat rows(d.x.rows(), 5);
    rows << d.x, d.y;
    write_csv(path, {"x1", "x2", "x3", "x4", "y"}, rows);
  } else {
    throw ConfigError("experiment", "gen supports 'nb' and 'logistic', got '" + experiment + "'");
  }
}

std::vector<int> read_counts(const std::string& path) {
  const CsvTable t = read_csv(path);
  if (t.rows.cols() != 1) throw CsvError(path + ": expected one column of counts");
  std::vector<int> out;
  for (Eigen::Index i = 0; i < t.rows.rows(); ++i) {
    const double v = t.rows(i, 0);
    if (v < 0 || v != std::floor(v)) throw CsvError(path + ": line " + std::to_string(i + 2) + ": not a count");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

LogisticData read_logistic_data(const std::string& path) {
  const CsvTable t = read_csv(path);
  if (t.rows.cols() < 2) throw CsvError(path + ": expected predictors and a final y column");
  LogisticData d;
  d.x = t.rows.leftCols(t.rows.cols() - 1);
  d.y = t.rows.col(t.rows.cols() - 1);
  for (Eigen::Index i = 0; i < d.y.size(); ++i) {
    if (d.y[i] != 0.0 && d.y[i] != 1.0) throw CsvError(path + ": line " + std::to_string(i + 2) + ": y must be 0 or 1");
  }
  return d;
}

// ---------------------------------------------------------------------------
// Output helpers

json summary_json(const PosteriorSummary& s) {
  json vars = json::object();
  for (std::size_t i = 0; i < s.names.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    vars[s.names[i]] = {{"mean", s.mean[k]}, {"sd", s.sd[k]}, {"q025", s.q025[k]}, {"q975", s.q975[k]}};
  }
  json corr = json::array();
  for (Eigen::Index i = 0; i < s.corr.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < s.corr.cols(); ++j) row.push_back(s.corr(i, j));
    corr.push_back(row);
  }
  return {{"names", s.names}, {"variables", vars}, {"correlation", corr}};
}

namespace {

json to_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_train_log(const fs::path& path, const TrainLog& log) {
  Mat rows(static_cast<Eigen::Index>(log.rows.size()), 8);
  for (std::size_t i = 0; i < log.rows.size(); ++i) {
    const auto& r = log.rows[i];
    rows.row(static_cast<Eigen::Index>(i)) << r.epoch, r.elbo, r.elbo_se, r.cross_entropy, r.d_loss,
        r.d_mean_qtilde, r.d_mean_q, r.mean_log_eta;
  }
  write_csv(path.string(),
            {"epoch", "elbo", "elbo_se", "cross_entropy", "d_loss", "d_mean_qtilde", "d_mean_q", "mean_log_eta"},
            rows);
}

const std::set<std::string> kCommonKeys = {"experiment", "seed", "output_dir", "samples.count"};
const std::set<std::string> kTrainerKeys = {
    "trainer.J",     "trainer.T",          "trainer.M",     "trainer.epochs",     "trainer.lr",
    "trainer.beta1", "trainer.beta2",      "trainer.eps",   "trainer.stop_gradient", "trainer.checkpoint_every",
    "trainer.disc_hidden", "trainer.learn_eta", "q.init_mean", "q.init_log_var"};

std::set<std::string> keys(std::initializer_list<std::set<std::string>> groups) {
  std::set<std::string> out;
  for (const auto& g : groups) out.insert(g.begin(), g.end());
  return out;
}

struct TrainerDefaults {
  int j;
  int t;
  int m;
  int epochs;
};

TrainerConfig trainer_config(const Config& c, TrainerDefaults d, int threads) {
  TrainerConfig tc;
  tc.particles = c.integer("trainer.J", d.j);
  tc.steps = c.integer("trainer.T", d.t);
  tc.warmup = c.integer("trainer.M", d.m);
  tc.epochs = c.integer("trainer.epochs", d.epochs);
  tc.adam.lr = c.number("trainer.lr", tc.adam.lr);
  tc.adam.beta1 = c.number("trainer.beta1", tc.adam.beta1);
  tc.adam.beta2 = c.number("trainer.beta2", tc.adam.beta2);
  tc.adam.eps = c.number("trainer.eps", tc.adam.eps);
  tc.stop_gradient = c.boolean("trainer.stop_gradient", tc.stop_gradient);
  tc.learn_eta = c.boolean("trainer.learn_eta", tc.learn_eta);
  tc.checkpoint_every = c.integer("trainer.checkpoint_every", 0);
  tc.disc_hidden = c.int_list("trainer.disc_hidden", tc.disc_hidden);
  tc.seed = c.seed("seed", 1);
  tc.threads = threads;
  try {
    tc.validate();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    throw ConfigError(msg.substr(0, msg.find(':')), msg.substr(msg.find(':') + 2));
  }
  return tc;
}

/// φ initialization from q.init_mean / q.init_log_var, falling back to the
/// experiment's default.
VariationalParams initial_phi(const Config& c, const VariationalParams& fallback) {
  VariationalParams phi = fallback;
  if (auto m = c.vector("q.init_mean")) {
    if (m->size() != phi.dim()) throw ConfigError("q.init_mean", "expected " + std::to_string(phi.dim()) + " values");
    phi.mean = *m;
  }
  if (c.has("q.init_log_var")) {
    if (c.raw().at("q.init_log_var").is_array()) {
      const Vec lv = *c.vector("q.init_log_var");
      if (lv.size() != phi.dim()) throw ConfigError("q.init_log_var", "expected " + std::to_string(phi.dim()) + " values");
      phi.log_var = lv;
    } else {
      phi.log_var = Vec::Constant(phi.dim(), c.number("q.init_log_var", 0.0));
    }
  }
  return phi;
}

json checkpoint_json(const Config& c, const Trainer& tr, const TargetModel& model) {
  json snaps = json::array();
  for (const auto& s : tr.log().snapshots) {
    snaps.push_back({{"epoch", s.epoch}, {"phi", to_json(s.phi)}, {"eta", to_json(s.eta)},
                     {"discriminator", to_json(s.disc)}, {"theta", to_json(s.theta)}});
  }
  return {{"config", c.raw()},
          {"seed", tr.config().seed},
          {"epoch", tr.epoch()},
          {"phi_mean", to_json(tr.phi().mean)},
          {"phi_log_var", to_json(tr.phi().log_var)},
          {"eta", to_json(tr.kernel().params())},
          {"discriminator", to_json(tr.discriminator().params())},
          {"theta", to_json(model.theta())},
          {"snapshots", snaps}};
}

/// Trains and writes train_log.csv and checkpoint.json; a divergence still
/// leaves the partial log on disk.
void train_and_log(Trainer& tr, const Config& c, const TargetModel& model, const fs::path& out) {
  log_message(LogLevel::Info, "training " + std::to_string(tr.config().epochs) + " epochs (J=" +
                                  std::to_string(tr.config().particles) + ", T=" +
                                  std::to_string(tr.config().steps) + ", M=" +
                                  std::to_string(tr.config().warmup) + ")");
  try {
    while (tr.epoch() < tr.config().epochs) {
      // One epoch at a time so progress can be logged.
      const EpochStats s = [&] {
        try {
          return tr.run_epoch();
        } catch (const NumericError& e) {
          throw DivergenceError(tr.epoch(), e.what());
        }
      }();
      if (log_level() == LogLevel::Debug || s.epoch % 100 == 0) {
        std::ostringstream msg;
        msg << "epoch " << s.epoch << " elbo " << s.elbo << " d_loss " << s.d_loss;
        log_message(s.epoch % 100 == 0 ? LogLevel::Info : LogLevel::Debug, msg.str());
      }
    }
    tr.train();  // records the final snapshot
  } catch (const DivergenceError&) {
    write_train_log(out / "train_log.csv", tr.log());
    throw;
  }
  write_train_log(out / "train_log.csv", tr.log());
  write_json(out / "checkpoint.json", checkpoint_json(c, tr, model));
}

void write_sample_files(const fs::path& out, const std::vector<std::string>& names, const Mat& q, const Mat& qt) {
  write_csv((out / "samples_q.csv").string(), names, q);
  write_csv((out / "samples_qtilde.csv").string(), names, qt);
}

constexpr std::uint64_t kSampleStream = 1ULL << 62;
constexpr std::uint64_t kEvalStream = (1ULL << 62) + (1ULL << 40);

json moments_json(const Mat& rows) {
  const Vec m = column_mean(rows);
  const Mat cov = column_cov(rows);
  json c = json::array();
  for (Eigen::Index i = 0; i < cov.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < cov.cols(); ++j) r.push_back(cov(i, j));
    c.push_back(r);
  }
  return {{"mean", to_json(m)}, {"cov", c}};
}

// ---------------------------------------------------------------------------
// toy2d

json run_toy2d(const Config& c, const fs::path& out, int threads) {
  c.reject_unknown(keys({kCommonKeys, kTrainerKeys, {"model.variant", "sgld.log_step", "sgld.per_dimension"}}));
  const std::string variant_name = c.string("model.variant", "correlated-gaussian");
  ToyVariant variant;
  try {
    variant = parse_toy_variant(variant_name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("model.variant", e.what());
  }
  auto model = make_toy_target(variant);
  SgldKernel kernel(*model, c.number("sgld.log_step", -2.0), c.boolean("sgld.per_dimension", false));
  const TrainerConfig tc = trainer_config(c, {200, 5, 100, 1000}, threads);
  Trainer tr(*model, kernel, tc, initial_phi(c, VariationalParams::standard(2)));
  train_and_log(tr, c, *model, out);

  const int count = c.integer("samples.count", 5000);
  const auto [q, qt] = tr.sample(count, kSampleStream);
  const std::vector<std::string> names{"z1", "z2"};
  write_sample_files(out, names, q, qt);
  const PosteriorSummary s = summarize({names, qt});
  write_json(out / "summary.json", summary_json(s));

  json m = {{"experiment", "toy2d"}, {"variant", variant_name}, {"corr_qtilde", s.corr(0, 1)},
            {"corr_q", summarize({names, q}).corr(0, 1)}, {"qtilde", moments_json(qt)},
            {"log_step", to_json(kernel.params())}};
  if (variant == ToyVariant::Banana) {
    double ridge = 0.0;
    for (Eigen::Index i = 0; i < qt.rows(); ++i) ridge += qt(i, 0) - qt(i, 1) * qt(i, 1) / 4.0;
    m["ridge_mean"] = ridge / static_cast<double>(qt.rows());
  }
  if (variant == ToyVariant::GaussianMixture) {
    const auto& mix = static_cast<const GaussianMixtureTarget&>(*model);
    Vec counts = Vec::Zero(static_cast<Eigen::Index>(mix.components().size()));
    for (Eigen::Index i = 0; i < qt.rows(); ++i) {
      Eigen::Index best = 0;
      mix.responsibilities(qt.row(i).transpose()).maxCoeff(&best);
      counts[best] += 1.0;
    }
    m["mode_fractions"] = to_json(counts / static_cast<double>(qt.rows()));
  }
  return m;
}

// ---------------------------------------------------------------------------
// nb

json run_nb(const Config& c, const fs::path& out, int threads) {
  c.reject_unknown(keys({kCommonKeys, kTrainerKeys,
                         {"data.path", "data.seed", "sgld.log_step", "sgld.per_dimension", "sgld.minibatch",
                          "grid.cells", "mfvi.epochs", "mfvi.samples", "mfvi.lr"}}));
  std::vector<int> counts;
  if (c.has("data.path")) {
    const std::string p = c.path("data.path", "");
    if (!fs::exists(p)) throw ConfigError("data.path", "file not found: " + p);
    counts = read_counts(p);
  } else {
    RngStream rng(c.seed("data.seed", c.seed("seed", 1)), 0);
    counts = generate_nb_counts(rng);
  }
  NBModel model(counts);

  // Default q_φ: centered on the method-of-moments estimate of (r, p).
  double mean = 0.0;
  double var = 0.0;
  for (int x : counts) mean += x;
  mean /= std::max<std::size_t>(1, counts.size());
  for (int x : counts) var += (x - mean) * (x - mean);
  var /= std::max<double>(1.0, static_cast<double>(counts.size()) - 1.0);
  Vec m0 = Vec::Zero(2);
  if (var > mean && mean > 0.0) {
    const double p_hat = 1.0 - mean / var;  // var = mean / (1 - p)
    const double r_hat = mean * (1.0 - p_hat) / p_hat;
    m0 << std::log(r_hat), std::log(p_hat / (1.0 - p_hat));
  }
  const VariationalParams phi0 = initial_phi(c, VariationalParams(m0, Vec::Constant(2, -4.0)));

  SgldKernel kernel(model, c.number("sgld.log_step", -8.0), c.boolean("sgld.per_dimension", false),
                    static_cast<std::size_t>(c.integer("sgld.minibatch", 0)));
  const TrainerConfig tc = trainer_config(c, {1000, 10, 0, 2000}, threads);
  Trainer tr(model, kernel, tc, phi0);
  train_and_log(tr, c, model, out);

  const int count = c.integer("samples.count", 5000);
  const auto [q, qt] = tr.sample(count, kSampleStream);
  const auto names = model.variable_names();
  write_sample_files(out, names, q, qt);
  Mat rp(qt.rows(), 2);
  for (Eigen::Index i = 0; i < qt.rows(); ++i) {
    rp(i, 0) = std::exp(qt(i, 0));
    rp(i, 1) = 1.0 / (1.0 + std::exp(-qt(i, 1)));
  }
  const PosteriorSummary s = summarize({names, qt});
  const PosteriorSummary s_rp = summarize({{"r", "p"}, rp});
  json summary = summary_json(s);
  summary["natural_scale"] = summary_json(s_rp);
  write_json(out / "summary.json", summary);

  log_message(LogLevel::Info, "grid oracle");
  const NbGridPosterior grid = nb_grid_posterior_auto(model, c.integer("grid.cells", 400));
  log_message(LogLevel::Info, "mean-field VI");
  AdamConfig mf_adam = tc.adam;
  mf_adam.lr = c.number("mfvi.lr", 0.01);
  const VariationalParams mf = fit_mfvi(model, phi0, c.integer("mfvi.epochs", 3000),
                                        c.integer("mfvi.samples", 100), mf_adam, tc.seed);
  return {{"experiment", "nb"},
          {"oracle",
           {{"mean_r", grid.mean_r},
            {"mean_p", grid.mean_p},
            {"sd_r", std::sqrt(grid.cov_rp(0, 0))},
            {"sd_p", std::sqrt(grid.cov_rp(1, 1))},
            {"corr_rp", grid.corr_rp()},
            {"mean_z", to_json(grid.mean_z)},
            {"var_z", to_json(grid.cov_z.diagonal())}}},
          {"mivi",
           {{"mean_r", s_rp.mean[0]},
            {"mean_p", s_rp.mean[1]},
            {"corr_rp", s_rp.corr(0, 1)},
            {"q_var_z", to_json(tr.phi().variance())},
            {"q_mean_z", to_json(tr.phi().mean)}}},
          {"mfvi", {{"var_z", to_json(mf.variance())}, {"mean_z", to_json(mf.mean)}}},
          {"log_step", to_json(kernel.params())}};
}

// ---------------------------------------------------------------------------
// logistic

/// Standard error of a chain mean by non-overlapping batch means.
double batch_means_se(const Vec& chain, int batches = 50) {
  const Eigen::Index size = chain.size() / batches;
  if (size < 1) throw std::invalid_argument("batch_means_se: chain too short");
  Vec means(batches);
  for (int b = 0; b < batches; ++b) means[b] = chain.segment(b * size, size).mean();
  const double m = means.mean();
  return std::sqrt((means.array() - m).square().sum() / (batches - 1) / batches);
}

json run_logistic(const Config& c, const fs::path& out, int threads) {
  c.reject_unknown(keys({kCommonKeys, kTrainerKeys,
                         {"data.path", "data.seed", "kernel.hidden", "baseline.iters", "baseline.burn_in",
                          "extrapolate.steps", "extrapolate.burn_in", "extrapolate.chains",
                          "extrapolate.checkpoints"}}));
  LogisticData data;
  if (c.has("data.path")) {
    const std::string p = c.path("data.path", "");
    if (!fs::exists(p)) throw ConfigError("data.path", "file not found: " + p);
    data = read_logistic_data(p);
  } else {
    RngStream rng(c.seed("data.seed", c.seed("seed", 1)), 0);
    data = generate_logistic_data(rng);
  }
  LogisticModel model(data.x, data.y);
  const std::uint64_t seed = c.seed("seed", 1);
  RngStream init_rng(seed, 0xE7A);
  LogisticKernel kernel(model, c.int_list("kernel.hidden", {32, 32}), init_rng);
  const TrainerConfig tc = trainer_config(c, {200, 1, 0, 1000}, threads);
  Trainer tr(model, kernel, tc, initial_phi(c, VariationalParams::standard(model.dim())));
  train_and_log(tr, c, model, out);

  const int count = c.integer("samples.count", 5000);
  const auto [q, qt] = tr.sample(count, kSampleStream);
  const auto names = model.variable_names();
  write_sample_files(out, names, q, qt);
  const PosteriorSummary s = summarize({names, qt});
  write_json(out / "summary.json", summary_json(s));

  log_message(LogLevel::Info, "Polya-Gamma Gibbs baseline");
  RngStream gibbs_rng(seed, kEvalStream);
  const SampleTable gibbs = gibbs_logistic_baseline(model, c.integer("baseline.iters", 6000),
                                                    c.integer("baseline.burn_in", 1000), gibbs_rng);
  write_csv((out / "baseline_samples.csv").string(), gibbs.names, gibbs.rows);
  const PosteriorSummary gs = summarize(gibbs);
  write_json(out / "baseline_summary.json", summary_json(gs));
  Vec gibbs_se(model.dim());
  for (Eigen::Index k = 0; k < model.dim(); ++k) gibbs_se[k] = batch_means_se(gibbs.rows.col(k));

  // The learned kernel as a standalone chain.
  RngStream ext_rng(seed, kEvalStream + 1);
  const SampleTable ext = extrapolate(kernel, tr.phi().mean, c.integer("extrapolate.steps", 5000),
                                      c.integer("extrapolate.burn_in", 4000), ext_rng, names);
  write_csv((out / "extrapolated_samples.csv").string(), ext.names, ext.rows);
  write_json(out / "extrapolated_summary.json", summary_json(summarize(ext)));

  // Moments of many extrapolated chains started from q_φ, at checkpoints.
  const std::vector<int> checkpoints = c.int_list("extrapolate.checkpoints", {1, 5, 20, 100});
  const int chains = c.integer("extrapolate.chains", 1000);
  const int last = checkpoints.empty() ? 0 : *std::max_element(checkpoints.begin(), checkpoints.end());
  std::vector<Mat> at(checkpoints.size(), Mat(chains, model.dim()));
  parallel_for(chains, threads, [&](int j) {
    RngStream rng(seed, kEvalStream + 1000 + static_cast<std::uint64_t>(j));
    Vec z = q_sample(tr.phi(), rng).z;
    for (int t = 1; t <= last; ++t) {
      z = kernel.sample(z, rng);
      for (std::size_t k = 0; k < checkpoints.size(); ++k) {
        if (checkpoints[k] == t) at[k].row(j) = z.transpose();
      }
    }
  });
  const Vec g_mean = column_mean(gibbs.rows);
  const Mat g_cov = column_cov(gibbs.rows);
  json distances = json::array();
  for (std::size_t k = 0; k < checkpoints.size(); ++k) {
    distances.push_back({{"t", checkpoints[k]},
                         {"distance", moment_distance(column_mean(at[k]), column_cov(at[k]), g_mean, g_cov)}});
  }

  return {{"experiment", "logistic"},
          {"mivi", {{"mean", to_json(s.mean)}, {"sd", to_json(s.sd)}, {"se", to_json(s.sd / std::sqrt(double(count)))},
                    {"corr12", s.corr(0, 1)}, {"corr34", s.corr(2, 3)}}},
          {"gibbs", {{"mean", to_json(gs.mean)}, {"sd", to_json(gs.sd)}, {"se", to_json(gibbs_se)},
                     {"corr12", gs.corr(0, 1)}, {"corr34", gs.corr(2, 3)}}},
          {"extrapolated_moment_distance", distances}};
}

// ---------------------------------------------------------------------------
// bridge

double default_rho(double alpha) {
  if (alpha == 1.0) return 0.237;
  if (alpha < 1.0) return 0.53;
  return 0.1;
}

json run_bridge(const Config& c, const fs::path& out, int threads) {
  c.reject_unknown(keys({kCommonKeys, kTrainerKeys,
                         {"data.path", "model.alpha", "model.rho", "model.r", "model.c", "extrapolate.steps",
                          "extrapolate.burn_in"}}));
  const std::string path = c.path("data.path", std::string(MIVI_SOURCE_DIR) + "/data/diabetes.csv");
  if (!fs::exists(path)) throw ConfigError("data.path", "file not found: " + path);
  const RegressionData data = load_diabetes(path);
  const double alpha = c.number("model.alpha", 1.0);
  if (!(alpha > 0.0 && alpha < 2.0)) throw ConfigError("model.alpha", "must lie in (0, 2)");
  const double rho = c.number("model.rho", default_rho(alpha));
  if (!(rho > 0.0)) throw ConfigError("model.rho", "must be positive");
  const double shape = c.number("model.r", 1.0);
  const double rate = c.number("model.c", 1.0);
  if (!(shape > 0.0)) throw ConfigError("model.r", "must be positive");
  if (!(rate > 0.0)) throw ConfigError("model.c", "must be positive");
  BridgeModel model(data.x, data.y, alpha, rho, shape, rate);
  const Eigen::Index p = model.num_coef();
  BridgeKernel kernel(model, bridge_initial_params(model));

  // q_φ starts at the least-squares fit and its sampling variances.
  const Vec beta_ols = ols(data.x, data.y);
  const double n = static_cast<double>(data.y.size());
  const double s2 = (data.y - data.x * beta_ols).squaredNorm() / (n - p);
  Vec m0(p + 1);
  Vec lv0(p + 1);
  m0.head(p) = beta_ols;
  m0[p] = std::log(s2);
  lv0.head(p) = (s2 * spd_inverse(model.xtx()).diagonal()).array().log();
  lv0[p] = std::log(2.0 / (n - p));
  const TrainerConfig tc = trainer_config(c, {100, 3, 0, 1000}, threads);
  Trainer tr(model, kernel, tc, initial_phi(c, VariationalParams(m0, lv0)));
  train_and_log(tr, c, model, out);

  const int count = c.integer("samples.count", 5000);
  const auto [q, qt] = tr.sample(count, kSampleStream);
  const auto names = model.variable_names();
  write_sample_files(out, names, q, qt);
  const PosteriorSummary s = summarize({names, qt});
  write_json(out / "summary.json", summary_json(s));

  // Extrapolation from β at OLS and σ² = 1.
  Vec init(p + 1);
  init.head(p) = beta_ols;
  init[p] = 0.0;
  RngStream ext_rng(tc.seed, kEvalStream + 1);
  const SampleTable ext = extrapolate(kernel, init, c.integer("extrapolate.steps", 5000),
                                      c.integer("extrapolate.burn_in", 4000), ext_rng, names);
  write_csv((out / "extrapolated_samples.csv").string(), ext.names, ext.rows);
  write_json(out / "extrapolated_summary.json", summary_json(summarize(ext)));
  const PosteriorSummary es = summarize(ext);

  json m = {{"experiment", "bridge"},
            {"alpha", alpha},
            {"rho", rho},
            {"names", std::vector<std::string>(names.begin(), names.begin() + p)},
            {"mivi", {{"mean", to_json(s.mean.head(p))}, {"q025", to_json(s.q025.head(p))}, {"q975", to_json(s.q975.head(p))}}},
            {"extrapolated", {{"mean", to_json(es.mean.head(p))}, {"q025", to_json(es.q025.head(p))}, {"q975", to_json(es.q975.head(p))}}},
            {"weibull_log_ab", to_json(kernel.params())}};
  // Frequentist point estimate with the L1 norm matched to MIVI's posterior mean.
  if (alpha == 1.0 || alpha == 1.5) {
    const double target = s.mean.head(p).lpNorm<1>();
    const double psi = match_l1_penalty(data.x, data.y, alpha, target);
    const Vec point = alpha == 1.0 ? lasso_cd(data.x, data.y, psi).beta : bridge_prox_solve(data.x, data.y, alpha, psi);
    m["frequentist"] = {{"psi", psi}, {"beta", to_json(point)}, {"l1", point.lpNorm<1>()}, {"target_l1", target}};
    Mat rows(1, p);
    rows.row(0) = point.transpose();
    write_csv((out / "frequentist_estimate.csv").string(), std::vector<std::string>(names.begin(), names.begin() + p), rows);
  }
  return m;
}

// ---------------------------------------------------------------------------
// gradcheck, klcheck, evidence

json run_gradcheck(const Config& c) {
  c.reject_unknown(keys({{"experiment", "seed", "output_dir", "gradcheck.configs", "gradcheck.tolerance", "data.path"}}));
  GradcheckOptions o;
  o.configs = c.integer("gradcheck.configs", 20);
  o.seed = c.seed("seed", 2024);
  o.tolerance = c.number("gradcheck.tolerance", 1e-4);
  o.diabetes_path = c.path("data.path", std::string(MIVI_SOURCE_DIR) + "/data/diabetes.csv");
  if (!fs::exists(o.diabetes_path)) throw ConfigError("data.path", "file not found: " + o.diabetes_path);
  if (o.configs < 1) throw ConfigError("gradcheck.configs", "must be at least 1");
  const GradcheckReport r = run_gradient_suites(o);
  json suites = json::object();
  for (const auto& [k, v] : r.max_rel_error) suites[k] = v;
  return {{"experiment", "gradcheck"}, {"configs", r.configs}, {"tolerance", r.tolerance},
          {"max_rel_error", suites}, {"passed", r.passed()}};
}

json run_klcheck(const Config& c) {
  c.reject_unknown(keys({{"experiment", "seed", "output_dir", "ar1.coef", "ar1.start_mean", "ar1.start_var",
                          "ar1.steps", "grid.cells", "elbo_bound.configs", "elbo_bound.samples", "elbo_bound.K",
                          "elbo_bound.T"}}));
  const double coef = c.number("ar1.coef", 0.9);
  if (!(std::abs(coef) < 1.0)) throw ConfigError("ar1.coef", "must lie in (-1, 1)");
  const double noise = std::sqrt(1.0 - coef * coef);
  const int steps = c.integer("ar1.steps", 20);
  const auto marg = ar1_marginals(coef, noise, c.number("ar1.start_mean", 5.0), c.number("ar1.start_var", 1.0), steps);
  const int cells = c.integer("grid.cells", 20000);
  json closed = json::array();
  json grid = json::array();
  double max_diff = 0.0;
  bool decreasing = true;
  double prev = INFINITY;
  for (const auto& mg : marg) {
    const double kl = gaussian_kl_1d(mg.mean, mg.var, 0.0, 1.0);
    const double lo = std::min(-12.0, mg.mean - 12.0 * std::sqrt(mg.var));
    const double hi = std::max(12.0, mg.mean + 12.0 * std::sqrt(mg.var));
    const double gk = grid_kl(
        [&](const Vec& z) { return -0.5 * std::log(2 * M_PI * mg.var) - 0.5 * (z[0] - mg.mean) * (z[0] - mg.mean) / mg.var; },
        [](const Vec& z) { return -0.5 * std::log(2 * M_PI) - 0.5 * z[0] * z[0]; }, {{lo, hi, cells}});
    closed.push_back(kl);
    grid.push_back(gk);
    max_diff = std::max(max_diff, std::abs(kl - gk));
    if (!(kl < prev)) decreasing = false;
    prev = kl;
  }

  // Bound check on random (φ, η) over the toy targets.
  const int configs = c.integer("elbo_bound.configs", 20);
  const int samples = c.integer("elbo_bound.samples", 2000);
  const int k = c.integer("elbo_bound.K", 50);
  const int t_steps = c.integer("elbo_bound.T", 5);
  RngStream rng(c.seed("seed", 11), 0);
  json bounds = json::array();
  const ToyVariant variants[] = {ToyVariant::CorrelatedGaussian, ToyVariant::Banana, ToyVariant::GaussianMixture};
  for (int i = 0; i < configs; ++i) {
    auto model = make_toy_target(variants[i % 3]);
    Vec mean(2), lv(2);
    mean << rng.uniform() * 2 - 1, rng.uniform() * 2 - 1;
    lv << rng.uniform() * 2 - 1.5, rng.uniform() * 2 - 1.5;
    const double log_step = -3.0 + 2.5 * rng.uniform();
    SgldKernel kernel(*model, log_step, false);
    const BoundCheck b = elbo_bound_check(*model, kernel, VariationalParams(mean, lv), t_steps, samples, k, rng);
    bounds.push_back({{"variant", to_string(variants[i % 3])}, {"log_step", log_step},
                      {"lhs", b.lhs}, {"rhs", b.rhs}, {"se", b.se}, {"holds", b.lhs <= b.rhs + 3.0 * b.se}});
  }
  return {{"experiment", "klcheck"},
          {"ar1", {{"closed_form", closed}, {"grid", grid}, {"max_abs_diff", max_diff}, {"strictly_decreasing", decreasing}}},
          {"elbo_bound", bounds}};
}

json run_evidence(const Config& c, const fs::path& out, int threads) {
  c.reject_unknown(keys({kCommonKeys, kTrainerKeys,
                         {"data.seed", "model.n", "model.dim", "model.prior_var", "model.noise_sd", "sgld.log_step",
                          "is.samples", "is.K", "trainer.learn_theta"}}));
  const int n = c.integer("model.n", 50);
  const int dim = c.integer("model.dim", 2);
  const double prior_var = c.number("model.prior_var", 1.0);
  const double noise_sd = c.number("model.noise_sd", 1.0);
  if (n < 0) throw ConfigError("model.n", "must be non-negative");
  if (dim < 1) throw ConfigError("model.dim", "must be at least 1");
  if (!(prior_var > 0.0)) throw ConfigError("model.prior_var", "must be positive");
  if (!(noise_sd > 0.0)) throw ConfigError("model.noise_sd", "must be positive");
  RngStream data_rng(c.seed("data.seed", c.seed("seed", 1)), 0);
  const Vec truth = std::sqrt(prior_var) * data_rng.normal_vec(dim);
  Mat data(n, dim);
  for (int i = 0; i < n; ++i) data.row(i) = (truth + noise_sd * data_rng.normal_vec(dim)).transpose();
  ConjugateGaussianModel model(data, prior_var, noise_sd);

  SgldKernel kernel(model, c.number("sgld.log_step", -5.0), false);
  TrainerConfig tc = trainer_config(c, {200, 5, 0, 0}, threads);
  tc.learn_theta = c.boolean("trainer.learn_theta", true);
  // Default q_φ: the exact posterior.
  const VariationalParams phi0 = initial_phi(
      c, VariationalParams(model.posterior_mean(), Vec::Constant(dim, std::log(model.posterior_var()))));
  Trainer tr(model, kernel, tc, phi0);
  train_and_log(tr, c, model, out);

  const int count = c.integer("samples.count", 5000);
  const auto [q, qt] = tr.sample(count, kSampleStream);
  std::vector<std::string> names;
  for (int i = 0; i < dim; ++i) names.push_back("z" + std::to_string(i + 1));
  write_sample_files(out, names, q, qt);
  write_json(out / "summary.json", summary_json(summarize({names, qt})));

  RngStream rng(tc.seed, kEvalStream);
  const ImportanceEstimate est = marginal_loglik_is(model, kernel, tr.phi(), tc.steps, c.integer("is.samples", 1000),
                                                    c.integer("is.K", 50), rng);
  // Delta-method standard error of the log of the weight mean.
  const Vec w = (est.log_weights.array() - est.log_weights.maxCoeff()).exp();
  const double se = std::sqrt((w.array() - w.mean()).square().sum() / (w.size() - 1) / w.size()) / w.mean();
  return {{"experiment", "evidence"},
          {"analytic_log_evidence", model.log_evidence()},
          {"is_log_evidence", est.value},
          {"abs_error", std::abs(est.value - model.log_evidence())},
          {"is_se", se},
          {"noise_sd", model.noise_sd()}};
}

}  // namespace

json run_experiment(const Config& config, const RunOptions& options) {
  const std::string name = config.experiment();
  const std::string out_str = !options.out_dir.empty() ? options.out_dir : config.path("output_dir", "out/" + name);
  const fs::path out(out_str);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw ConfigError("output_dir", "cannot create '" + out.string() + "'");
  if (options.threads < 1) throw ConfigError("threads", "must be at least 1");

  json metrics;
  if (name == "toy2d") {
    metrics = run_toy2d(config, out, options.threads);
  } else if (name == "nb") {
    metrics = run_nb(config, out, options.threads);
  } else if (name == "logistic") {
    metrics = run_logistic(config, out, options.threads);
  } else if (name == "bridge") {
    metrics = run_bridge(config, out, options.threads);
  } else if (name == "gradcheck") {
    metrics = run_gradcheck(config);
  } else if (name == "klcheck") {
    metrics = run_klcheck(config);
  } else if (name == "evidence") {
    metrics = run_evidence(config, out, options.threads);
  } else {
    throw ConfigError("experiment", "unknown experiment '" + name + "'");
  }
  write_json(out / "metrics.json", metrics);
  return metrics;
}

}  // namespace mivi
