#include "mivi/gradcheck.hpp"

#include "mivi/discriminator.hpp"
#include "mivi/finite_diff.hpp"
#include "mivi/linalg.hpp"
#include "mivi/models.hpp"
#include "mivi/trainer.hpp"
#include "mivi/transitions.hpp"
#include "mivi/variational.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>

namespace mivi {

bool GradcheckReport::passed() const {
  return std::all_of(max_rel_error.begin(), max_rel_error.end(),
                     [&](const auto& kv) { return kv.second <= tolerance; });
}

namespace {

Mat random_normal(RngStream& rng, Eigen::Index rows, Eigen::Index cols) {
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  }
  return m;
}

Vec uniform_vec(RngStream& rng, Eigen::Index n, double lo, double hi) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = lo + (hi - lo) * rng.uniform();
  return v;
}

struct Recorder {
  std::map<std::string, double>& out;
  void add(const std::string& suite, double err) {
    auto [it, inserted] = out.emplace(suite, err);
    if (!inserted) it->second = std::max(it->second, err);
  }
};

// A model plus a sampler of sensible evaluation points.
struct ModelCase {
  std::string name;
  std::unique_ptr<TargetModel> model;
  std::function<Vec(RngStream&)> point;
};

std::vector<ModelCase> model_cases(RngStream& rng, const std::string& diabetes_path) {
  std::vector<ModelCase> cases;
  for (ToyVariant v : {ToyVariant::CorrelatedGaussian, ToyVariant::Banana, ToyVariant::GaussianMixture}) {
    cases.push_back({"toy_" + to_string(v), make_toy_target(v), [](RngStream& r) { return uniform_vec(r, 2, -3, 3); }});
  }
  cases.push_back({"conjugate_gaussian",
                   std::make_unique<ConjugateGaussianModel>(random_normal(rng, 30, 3), 2.0, 0.7),
                   [](RngStream& r) { return uniform_vec(r, 3, -2, 2); }});
  {
    std::vector<int> counts;
    for (int i = 0; i < 60; ++i) counts.push_back(static_cast<int>(rng.below(15)));
    cases.push_back({"nb", std::make_unique<NBModel>(counts), [](RngStream& r) {
                       Vec z(2);
                       z << r.uniform() * 3.0 - 1.0, r.uniform() * 4.0 - 2.0;
                       return z;
                     }});
  }
  {
    Mat x = random_normal(rng, 40, 4);
    Vec y(40);
    for (int i = 0; i < 40; ++i) y[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    cases.push_back({"logistic", std::make_unique<LogisticModel>(x, y),
                     [](RngStream& r) { return uniform_vec(r, 4, -2, 2); }});
  }
  {
    Mat x;
    Vec y;
    if (!diabetes_path.empty()) {
      const RegressionData d = load_diabetes(diabetes_path);
      x = d.x.topRows(50);
      y = d.y.head(50);
    } else {
      x = random_normal(rng, 50, 10);
      y = x * uniform_vec(rng, 10, -2, 2) + random_normal(rng, 50, 1);
    }
    const double alpha = 0.5 + rng.uniform();
    const Eigen::Index p = x.cols();
    cases.push_back({"bridge", std::make_unique<BridgeModel>(x, y, alpha, 0.8), [p](RngStream& r) {
                       Vec z(p + 1);
                       for (Eigen::Index i = 0; i < p; ++i) {
                         const double mag = 0.3 + 2.0 * r.uniform();
                         z[i] = r.uniform() < 0.5 ? -mag : mag;
                       }
                       z[p] = r.uniform() * 2.0 - 1.0;
                       return z;
                     }});
  }
  return cases;
}

void check_models(Recorder& rec, RngStream& rng, int configs, const std::string& diabetes_path) {
  for (auto& c : model_cases(rng, diabetes_path)) {
    const TargetModel& m = *c.model;
    for (int k = 0; k < configs; ++k) {
      const Vec z = c.point(rng);
      const Vec fd = finite_diff_grad([&](const Vec& x) { return m.log_joint(x); }, z);
      rec.add("grad_" + c.name, relative_error(m.grad_z(z), fd));
      const Vec v = rng.normal_vec(m.dim());
      const Mat jac = finite_diff_jacobian([&](const Vec& x) { return m.grad_z(x); }, z);
      rec.add("hvp_" + c.name, relative_error(m.hvp(z, v), jac * v));
    }
  }
  // θ gradient of the conjugate model (log noise scale).
  ConjugateGaussianModel cg(random_normal(rng, 25, 2), 1.5, 0.8);
  for (int k = 0; k < configs; ++k) {
    const Vec z = uniform_vec(rng, 2, -2, 2);
    const Vec theta = uniform_vec(rng, 1, -1, 1);
    cg.set_theta(theta);
    const Vec analytic = cg.grad_theta(z);
    const Vec fd = finite_diff_grad([&](const Vec& t) {
      ConjugateGaussianModel copy = cg;
      copy.set_theta(t);
      return copy.log_joint(z);
    }, theta);
    rec.add("grad_theta_conjugate_gaussian", relative_error(analytic, fd));
  }
}

void check_cholesky(Recorder& rec, RngStream& rng, int configs) {
  for (int k = 0; k < configs; ++k) {
    const int n = 2 + static_cast<int>(rng.below(5));
    const Mat m = random_normal(rng, n, n);
    const Mat a = m.transpose() * m + Mat::Identity(n, n);
    const Mat l_bar = Mat(random_normal(rng, n, n).triangularView<Eigen::Lower>());
    // Parameterize symmetric A by its lower triangle.
    std::vector<std::pair<int, int>> idx;
    for (int j = 0; j < n; ++j) {
      for (int i = j; i < n; ++i) idx.emplace_back(i, j);
    }
    Vec theta(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t q = 0; q < idx.size(); ++q) theta[q] = a(idx[q].first, idx[q].second);
    auto build = [&](const Vec& t) {
      Mat s(n, n);
      for (std::size_t q = 0; q < idx.size(); ++q) {
        s(idx[q].first, idx[q].second) = t[q];
        s(idx[q].second, idx[q].first) = t[q];
      }
      return s;
    };
    const Vec fd = finite_diff_grad([&](const Vec& t) { return (cholesky(build(t)).cwiseProduct(l_bar)).sum(); }, theta);
    const Mat a_bar = cholesky_adjoint(cholesky(a), l_bar);
    Vec analytic(theta.size());
    for (std::size_t q = 0; q < idx.size(); ++q) {
      const auto [i, j] = idx[q];
      analytic[q] = i == j ? a_bar(i, j) : 2.0 * a_bar(i, j);
    }
    rec.add("cholesky_adjoint", relative_error(analytic, fd));

    // Tangent rule against finite differences along a symmetric direction.
    const Mat dm = random_normal(rng, n, n);
    const Mat da = dm + dm.transpose();
    const double h = 1e-6;
    const Mat fd_t = (cholesky(a + h * da) - cholesky(a - h * da)) / (2.0 * h);
    rec.add("cholesky_tangent", relative_error(cholesky_tangent(cholesky(a), da), fd_t));
  }
}

void check_variational(Recorder& rec, RngStream& rng, int configs) {
  for (int k = 0; k < configs; ++k) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(4));
    const VariationalParams phi(uniform_vec(rng, d, -1, 1), uniform_vec(rng, d, -1, 1));
    const Vec z = uniform_vec(rng, d, -2, 2);
    const QLogPdf lp = q_logpdf(phi, z);
    Vec analytic(2 * d);
    analytic << lp.d_mean, lp.d_log_var;
    const Vec fd = finite_diff_grad([&](const Vec& f) { return q_logpdf_value(VariationalParams::from_flat(f), z); }, phi.flat());
    rec.add("q_logpdf_phi", relative_error(analytic, fd));
    const Vec fdz = finite_diff_grad([&](const Vec& x) { return q_logpdf_value(phi, x); }, z);
    rec.add("q_logpdf_z", relative_error(lp.d_z, fdz));
  }
}

void check_sgld(Recorder& rec, RngStream& rng, int configs) {
  const ToyVariant variants[] = {ToyVariant::CorrelatedGaussian, ToyVariant::Banana, ToyVariant::GaussianMixture};
  for (int k = 0; k < configs; ++k) {
    auto model = make_toy_target(variants[k % 3]);
    const bool per_dim = k % 2 == 1;
    SgldKernel kernel(*model, -3.0 + 2.0 * rng.uniform(), per_dim);
    if (per_dim) kernel.set_params(uniform_vec(rng, 2, -3, -1));
    const int steps = 1 + static_cast<int>(rng.below(10));
    const VariationalParams phi(uniform_vec(rng, 2, -1, 1), uniform_vec(rng, 2, -1, 0));
    const Vec eps0 = rng.normal_vec(2);
    std::vector<StepNoise> noise;
    for (int t = 0; t < steps; ++t) noise.push_back(kernel.draw_noise(rng));
    const Vec w = rng.normal_vec(2);
    const Vec eta0 = kernel.params();

    auto loss_eta = [&](const Vec& eta) {
      SgldKernel kk = kernel;
      kk.set_params(eta);
      return w.dot(replay_chain(kk, q_transform(phi, eps0), noise).z.back());
    };
    auto loss_phi = [&](const Vec& f) {
      return w.dot(replay_chain(kernel, q_transform(VariationalParams::from_flat(f), eps0), noise).z.back());
    };
    const Chain chain = replay_chain(kernel, q_transform(phi, eps0), noise);
    std::vector<Vec> z_bar(steps + 1, Vec::Zero(2));
    z_bar[steps] = w;
    Vec eta_bar = Vec::Zero(eta0.size());
    const Vec z0_bar = backprop_chain(kernel, chain, z_bar, &eta_bar);
    const Vec fd_eta = finite_diff_grad(loss_eta, eta0);
    rec.add("sgld_chain_eta", relative_error(eta_bar, fd_eta));
    Vec phi_bar(4);
    const Vec sd = phi.sd();
    phi_bar << z0_bar, (0.5 * z0_bar.array() * sd.array() * eps0.array()).matrix();
    const Vec fd_phi = finite_diff_grad(loss_phi, phi.flat());
    rec.add("sgld_chain_phi", relative_error(phi_bar, fd_phi));

    const SgldChainJacobian jac = sgld_chain_jacobian(kernel, phi, eps0, noise);
    rec.add("sgld_chain_jacobian_eta", relative_error(jac.d_eta.transpose() * w, fd_eta));
    rec.add("sgld_chain_jacobian_phi", relative_error(jac.d_phi.transpose() * w, fd_phi));
  }
}

void check_logistic_kernel(Recorder& rec, RngStream& rng, int configs) {
  for (int k = 0; k < configs; ++k) {
    const Mat x = random_normal(rng, 20, 4);
    Vec y(20);
    for (int i = 0; i < 20; ++i) y[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    LogisticModel model(x, y);
    LogisticKernel kernel(model, {32, 32}, rng);
    const Vec z = uniform_vec(rng, 4, -1, 1);
    const StepNoise noise = kernel.draw_noise(rng);
    const Vec w = rng.normal_vec(4);
    Vec eta_bar = Vec::Zero(kernel.params().size());
    const Vec z_bar = kernel.backward(z, noise, w, &eta_bar);
    const Vec fd_eta = finite_diff_grad([&](const Vec& eta) {
      LogisticKernel kk = kernel;
      kk.set_params(eta);
      return w.dot(kk.step(z, noise));
    }, kernel.params());
    rec.add("logistic_kernel_eta", relative_error(eta_bar, fd_eta));
    const Vec fd_z = finite_diff_grad([&](const Vec& b) { return w.dot(kernel.step(b, noise)); }, z);
    rec.add("logistic_kernel_z", relative_error(z_bar, fd_z));
  }
}

void check_bridge_kernel(Recorder& rec, RngStream& rng, int configs, const std::string& diabetes_path) {
  Mat x_all;
  Vec y_all;
  if (!diabetes_path.empty()) {
    const RegressionData d = load_diabetes(diabetes_path);
    x_all = d.x;
    y_all = d.y;
  } else {
    x_all = random_normal(rng, 200, 10);
    y_all = x_all * uniform_vec(rng, 10, -3, 3) + random_normal(rng, 200, 1);
  }
  for (int k = 0; k < configs; ++k) {
    // A random subsample of 50 rows.
    std::vector<Eigen::Index> rows(x_all.rows());
    for (Eigen::Index i = 0; i < x_all.rows(); ++i) rows[i] = i;
    for (Eigen::Index i = 0; i < 50; ++i) std::swap(rows[i], rows[i + rng.below(x_all.rows() - i)]);
    Mat x(50, x_all.cols());
    Vec y(50);
    for (Eigen::Index i = 0; i < 50; ++i) {
      x.row(i) = x_all.row(rows[i]);
      y[i] = y_all[rows[i]];
    }
    const double alpha = 0.5 + rng.uniform();
    BridgeModel model(x, y, alpha, 0.5 + rng.uniform());
    const Eigen::Index p = model.num_coef();
    Vec eta = bridge_initial_params(model);
    eta += uniform_vec(rng, 2 * p, -0.5, 0.5);
    BridgeKernel kernel(model, eta);
    Vec z = Vec::Zero(p + 1);
    z[p] = std::log((y - x * ols(x, y)).squaredNorm() / 40.0) + rng.normal() * 0.3;
    const StepNoise noise = kernel.draw_noise(rng);
    const Vec w = rng.normal_vec(p + 1);
    Vec eta_bar = Vec::Zero(2 * p);
    const Vec z_bar = kernel.backward(z, noise, w, &eta_bar);
    const Vec fd_eta = finite_diff_grad([&](const Vec& e) {
      BridgeKernel kk = kernel;
      kk.set_params(e);
      return w.dot(kk.step(z, noise));
    }, eta);
    rec.add("bridge_kernel_eta", relative_error(eta_bar, fd_eta));
    const Vec fd_z = finite_diff_grad([&](const Vec& s) { return w.dot(kernel.step(s, noise)); }, z);
    rec.add("bridge_kernel_z", relative_error(z_bar, fd_z));
  }
}

Discriminator random_discriminator(Eigen::Index d, RngStream& rng) {
  Discriminator disc(d, {64, 64}, rng);
  Vec p = disc.params();
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] += 0.1 * rng.normal();  // leave the zero init
  disc.set_params(p);
  return disc;
}

void check_discriminator(Recorder& rec, RngStream& rng, int configs) {
  for (int k = 0; k < configs; ++k) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(4));
    const Discriminator disc = random_discriminator(d, rng);
    const Mat pos = random_normal(rng, d, 7);
    const Mat neg = random_normal(rng, d, 5).array() + 0.5;
    const Discriminator::LossGrad lg = disc.loss_grad(pos, neg);
    const Vec fd = finite_diff_grad([&](const Vec& p) {
      Discriminator dd = disc;
      dd.set_params(p);
      return dd.loss(pos, neg);
    }, disc.params());
    rec.add("discriminator_params", relative_error(lg.grad, fd));
    const Vec z = rng.normal_vec(d);
    const Vec fdz = finite_diff_grad([&](const Vec& x) { return disc.forward(x); }, z);
    rec.add("discriminator_input", relative_error(disc.input_grad(z), fdz));
  }
}

// The full surrogate and the φ path through the chain, with the particles'
// noise held fixed (common random numbers).
void check_trainer(Recorder& rec, RngStream& rng, int configs) {
  const ToyVariant variants[] = {ToyVariant::CorrelatedGaussian, ToyVariant::Banana, ToyVariant::GaussianMixture};
  for (int k = 0; k < configs; ++k) {
    auto model = make_toy_target(variants[k % 3]);
    SgldKernel kernel(*model, -2.5 + rng.uniform(), k % 2 == 1);
    const int steps = 1 + static_cast<int>(rng.below(5));
    const VariationalParams phi(uniform_vec(rng, 2, -0.5, 0.5), uniform_vec(rng, 2, -1, 0));
    const Discriminator disc = random_discriminator(2, rng);
    const std::vector<Particle> base = simulate_particles(kernel, phi, 6, steps, rng.next_u64(), 0, 1);

    auto rebuild = [&](const Kernel& kk, const VariationalParams& f) {
      std::vector<Particle> out;
      for (const auto& p : base) {
        Particle q;
        q.q.eps = p.q.eps;
        q.q.z = q_transform(f, p.q.eps);
        q.chain = replay_chain(kk, q.q.z, p.chain.noise);
        out.push_back(std::move(q));
      }
      return out;
    };
    const SurrogateEstimate est = elbo_surrogate(*model, kernel, phi, &disc, base, true);
    const Vec fd = finite_diff_grad([&](const Vec& eta) {
      SgldKernel kk = kernel;
      kk.set_params(eta);
      return elbo_surrogate(*model, kk, phi, &disc, rebuild(kk, phi), false).value;
    }, kernel.params());
    rec.add("trainer_surrogate_eta", relative_error(est.eta_grad, fd));

    const Vec analytic_phi = phi_gradient(kernel, phi, base, false);
    const Vec fd_phi = finite_diff_grad([&](const Vec& f) {
      const VariationalParams pf = VariationalParams::from_flat(f);
      std::vector<Vec> samples;
      for (const auto& p : rebuild(kernel, pf)) {
        for (std::size_t t = 1; t < p.chain.z.size(); ++t) samples.push_back(p.chain.z[t]);
      }
      return cross_entropy(pf, samples);
    }, phi.flat());
    rec.add("trainer_phi_path", relative_error(analytic_phi, fd_phi));
  }
}

}  // namespace

GradcheckReport run_gradient_suites(const GradcheckOptions& options) {
  GradcheckReport report;
  report.configs = options.configs;
  report.tolerance = options.tolerance;
  Recorder rec{report.max_rel_error};
  RngStream rng(options.seed, 0);
  check_models(rec, rng, options.configs, options.diabetes_path);
  check_cholesky(rec, rng, options.configs);
  check_variational(rec, rng, options.configs);
  check_sgld(rec, rng, options.configs);
  check_logistic_kernel(rec, rng, options.configs);
  check_bridge_kernel(rec, rng, options.configs, options.diabetes_path);
  check_discriminator(rec, rng, options.configs);
  check_trainer(rec, rng, options.configs);
  return report;
}

}  // namespace mivi
