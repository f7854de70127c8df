#include "geomem/dmd.hpp"

#include "geomem/errors.hpp"

#include <toml.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace geomem::dmd {

namespace {

Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double stddev = 1.0) {
  std::normal_distribution<double> n(0.0, stddev);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

/// tanh through the vectorized exp; std::tanh dominates the profile otherwise.
template <typename Derived>
Eigen::MatrixXd tanh_of(const Eigen::MatrixBase<Derived>& x) {
  return (1.0 - 2.0 / ((2.0 * x.array()).exp() + 1.0)).matrix();
}

}  // namespace

double Schedule::sigma(double t) const { return sigma_min * std::pow(sigma_max / sigma_min, t); }

void Schedule::validate() const {
  if (!(sigma_min > 0.0 && sigma_max > sigma_min)) throw InputError("schedule: require 0 < sigma_min < sigma_max");
}

Eigen::VectorXd ScoreField::evaluate(const Eigen::VectorXd& x, double t, const Schedule& schedule) const {
  return evaluate(Eigen::MatrixXd(x), Eigen::VectorXd::Constant(1, schedule.sigma(t))).col(0);
}

double ScoreField::dsm_loss(const Eigen::MatrixXd& x0, const Eigen::MatrixXd& eps, const Eigen::VectorXd& sigma,
                            Eigen::VectorXd* grad) const {
  const Eigen::MatrixXd xt = x0 + eps * sigma.asDiagonal();
  const Eigen::MatrixXd r = evaluate(xt, sigma) * sigma.asDiagonal() + eps;
  if (grad) *grad = Eigen::VectorXd::Zero(parameters().size());
  return r.squaredNorm() / double(r.size());
}

// ------------------------------------------------------------ GaussianScore

GaussianScore::GaussianScore(Eigen::VectorXd mean, Eigen::VectorXd log_var, bool trainable, double guidance)
    : mean_(std::move(mean)), log_var_(std::move(log_var)), trainable_(trainable), guidance_(guidance) {
  if (mean_.size() == 0 || mean_.size() != log_var_.size()) throw InputError("GaussianScore: mean/log_var size mismatch");
  if (!mean_.allFinite() || !log_var_.allFinite()) throw InputError("GaussianScore: non-finite parameters");
}

GaussianScore GaussianScore::from_std(const Eigen::VectorXd& mean, const Eigen::VectorXd& std, bool trainable) {
  if ((std.array() <= 0.0).any()) throw InputError("GaussianScore: std must be positive");
  return GaussianScore(mean, (2.0 * std.array().log()).matrix(), trainable);
}

Eigen::MatrixXd GaussianScore::evaluate(const Eigen::MatrixXd& x, const Eigen::VectorXd& sigma) const {
  const Eigen::ArrayXd var = log_var_.array().exp();
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const double s2 = sigma(i) * sigma(i);
    out.col(i) = (-guidance_ * (x.col(i) - mean_).array() / (var + s2)).matrix();
  }
  return out;
}

Eigen::VectorXd GaussianScore::parameters() const {
  Eigen::VectorXd p(2 * mean_.size());
  p << mean_, log_var_;
  return p;
}

void GaussianScore::set_parameters(const Eigen::VectorXd& params) {
  const Eigen::Index d = mean_.size();
  if (params.size() != 2 * d) throw InputError("GaussianScore: parameter size mismatch");
  mean_ = params.head(d);
  log_var_ = params.tail(d);
}

double GaussianScore::dsm_loss(const Eigen::MatrixXd& x0, const Eigen::MatrixXd& eps, const Eigen::VectorXd& sigma,
                               Eigen::VectorXd* grad) const {
  const Eigen::Index d = mean_.size();
  const Eigen::Index n = x0.cols();
  const Eigen::ArrayXd var = log_var_.array().exp();
  double loss = 0.0;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(2 * d);
  const double norm = 1.0 / double(n * d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = sigma(i);
    const Eigen::ArrayXd diff = (x0.col(i) + s * eps.col(i) - mean_).array();
    const Eigen::ArrayXd denom = var + s * s;
    const Eigen::ArrayXd r = -guidance_ * s * diff / denom + eps.col(i).array();
    loss += r.square().sum();
    g.head(d).array() += 2.0 * r * guidance_ * s / denom;
    g.tail(d).array() += 2.0 * r * guidance_ * s * diff * var / denom.square();
  }
  if (grad) *grad = g * norm;
  return loss * norm;
}

// ------------------------------------------------------------ MixtureScore

MixtureScore::MixtureScore(Eigen::VectorXd weights, Eigen::MatrixXd means, Eigen::VectorXd stds, double guidance)
    : weights_(std::move(weights)), means_(std::move(means)), stds_(std::move(stds)), guidance_(guidance) {
  if (weights_.size() == 0 || means_.cols() != weights_.size() || stds_.size() != weights_.size()) {
    throw InputError("MixtureScore: weights, means and stds must describe the same components");
  }
  if ((weights_.array() <= 0.0).any() || (stds_.array() <= 0.0).any()) {
    throw InputError("MixtureScore: weights and stds must be positive");
  }
  weights_ /= weights_.sum();
}

Eigen::MatrixXd MixtureScore::evaluate(const Eigen::MatrixXd& x, const Eigen::VectorXd& sigma) const {
  const Eigen::Index k = weights_.size();
  const double d = double(means_.rows());
  Eigen::MatrixXd out(x.rows(), x.cols());
  Eigen::VectorXd logits(k);
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const double s2 = sigma(i) * sigma(i);
    for (Eigen::Index c = 0; c < k; ++c) {
      const double var = stds_(c) * stds_(c) + s2;
      logits(c) = std::log(weights_(c)) - 0.5 * d * std::log(var) - (x.col(i) - means_.col(c)).squaredNorm() / (2.0 * var);
    }
    const Eigen::VectorXd resp = (logits.array() - logits.maxCoeff()).exp().matrix();
    const double total = resp.sum();
    Eigen::VectorXd s = Eigen::VectorXd::Zero(x.rows());
    for (Eigen::Index c = 0; c < k; ++c) {
      const double var = stds_(c) * stds_(c) + s2;
      s -= (resp(c) / total) * (x.col(i) - means_.col(c)) / var;
    }
    out.col(i) = guidance_ * s;
  }
  return out;
}

Eigen::MatrixXd MixtureScore::sample(int n, Rng& rng) const {
  std::discrete_distribution<int> pick(weights_.data(), weights_.data() + weights_.size());
  std::normal_distribution<double> normal;
  Eigen::MatrixXd out(means_.rows(), n);
  for (int i = 0; i < n; ++i) {
    const int c = pick(rng);
    for (Eigen::Index r = 0; r < means_.rows(); ++r) out(r, i) = means_(r, c) + stds_(c) * normal(rng);
  }
  return out;
}

// ------------------------------------------------------------ MlpScore

MlpScore::MlpScore(int dim, int hidden, Rng& rng) : dim_(dim) {
  if (dim < 1 || hidden < 1) throw InputError("MlpScore: dim and hidden must be positive");
  w1_ = normal_matrix(hidden, dim + 1, rng, 1.0 / std::sqrt(double(dim + 1)));
  b1_ = normal_matrix(hidden, 1, rng, 0.5).col(0);
  w2_ = normal_matrix(dim, hidden, rng, 0.1 / std::sqrt(double(hidden)));
  b2_ = Eigen::VectorXd::Zero(dim);
}

Eigen::MatrixXd MlpScore::predict(const Eigen::MatrixXd& x, const Eigen::VectorXd& sigma,
                                  Eigen::MatrixXd* hidden) const {
  Eigen::MatrixXd in(dim_ + 1, x.cols());
  in.topRows(dim_) = x;
  in.row(dim_) = sigma.array().log().matrix().transpose();
  Eigen::MatrixXd h = tanh_of((w1_ * in).colwise() + b1_);
  Eigen::MatrixXd out = (w2_ * h).colwise() + b2_;
  if (hidden) *hidden = std::move(h);
  return out;
}

Eigen::MatrixXd MlpScore::evaluate(const Eigen::MatrixXd& x, const Eigen::VectorXd& sigma) const {
  return -predict(x, sigma, nullptr) * sigma.cwiseInverse().asDiagonal();
}

Eigen::VectorXd MlpScore::parameters() const {
  Eigen::VectorXd p(w1_.size() + b1_.size() + w2_.size() + b2_.size());
  p << w1_.reshaped(), b1_, w2_.reshaped(), b2_;
  return p;
}

void MlpScore::set_parameters(const Eigen::VectorXd& params) {
  if (params.size() != parameters().size()) throw InputError("MlpScore: parameter size mismatch");
  Eigen::Index o = 0;
  w1_.reshaped() = params.segment(o, w1_.size());
  o += w1_.size();
  b1_ = params.segment(o, b1_.size());
  o += b1_.size();
  w2_.reshaped() = params.segment(o, w2_.size());
  o += w2_.size();
  b2_ = params.segment(o, b2_.size());
}

double MlpScore::dsm_loss(const Eigen::MatrixXd& x0, const Eigen::MatrixXd& eps, const Eigen::VectorXd& sigma,
                          Eigen::VectorXd* grad) const {
  const Eigen::MatrixXd xt = x0 + eps * sigma.asDiagonal();
  Eigen::MatrixXd h;
  const Eigen::MatrixXd pred = predict(xt, sigma, &h);
  const Eigen::MatrixXd r = eps - pred;  // σ·s + ε with s = −ε̂/σ
  const double norm = 1.0 / double(r.size());
  if (grad) {
    const Eigen::MatrixXd d_out = -2.0 * norm * r;
    Eigen::MatrixXd in(dim_ + 1, xt.cols());
    in.topRows(dim_) = xt;
    in.row(dim_) = sigma.array().log().matrix().transpose();
    const Eigen::MatrixXd d_h = ((w2_.transpose() * d_out).array() * (1.0 - h.array().square())).matrix();
    const Eigen::MatrixXd g_w1 = d_h * in.transpose();
    const Eigen::VectorXd g_b1 = d_h.rowwise().sum();
    const Eigen::MatrixXd g_w2 = d_out * h.transpose();
    const Eigen::VectorXd g_b2 = d_out.rowwise().sum();
    grad->resize(parameters().size());
    *grad << g_w1.reshaped(), g_b1, g_w2.reshaped(), g_b2;
  }
  return r.squaredNorm() * norm;
}

// ------------------------------------------------------------ generator

int GeneratorStep::parameter_count() const {
  return static_cast<int>(scale.size() + shift.size() + w1.size() + b1.size() + w2.size());
}

Eigen::MatrixXd GeneratorStep::apply(const Eigen::MatrixXd& u) const {
  Eigen::MatrixXd out = (scale.asDiagonal() * u).colwise() + shift;
  if (w1.rows() > 0) out += w2 * tanh_of((w1 * u).colwise() + b1);
  return out;
}

FewStepGenerator::FewStepGenerator(int dim, int hidden, Rng& rng, std::vector<double> noise_levels)
    : dim_(dim), hidden_(hidden), noise_levels_(std::move(noise_levels)) {
  if (dim < 1 || hidden < 0) throw InputError("FewStepGenerator: bad dimensions");
  if (static_cast<int>(noise_levels_.size()) != kGeneratorSteps) {
    throw InputError("FewStepGenerator: need one noise level per step (4)");
  }
  for (double tau : noise_levels_) {
    if (!(tau > 0.0)) throw InputError("FewStepGenerator: noise levels must be positive");
  }
  for (int k = 0; k < kGeneratorSteps; ++k) {
    const double tau = noise_levels_[std::size_t(k)];
    GeneratorStep s;
    s.scale = Eigen::VectorXd::Constant(dim, k == 0 ? 1.0 / tau : 1.0 / std::sqrt(1.0 + tau * tau));
    s.shift = Eigen::VectorXd::Zero(dim);
    s.w1 = normal_matrix(hidden, dim, rng, 1.0);
    s.b1 = hidden > 0 ? Eigen::VectorXd(normal_matrix(hidden, 1, rng, 1.0).col(0)) : Eigen::VectorXd(0);
    s.w2 = Eigen::MatrixXd::Zero(dim, hidden);
    steps_.push_back(std::move(s));
  }
}

int FewStepGenerator::parameter_count() const {
  int n = 0;
  for (const auto& s : steps_) n += s.parameter_count();
  return n;
}

int FewStepGenerator::parameter_offset(int k) const {
  int o = 0;
  for (int i = 0; i < k; ++i) o += steps_[std::size_t(i)].parameter_count();
  return o;
}

Eigen::VectorXd FewStepGenerator::parameters() const {
  Eigen::VectorXd p(parameter_count());
  Eigen::Index o = 0;
  auto put = [&](const auto& m) {
    p.segment(o, m.size()) = m.reshaped();
    o += m.size();
  };
  for (const auto& s : steps_) {
    put(s.scale);
    put(s.shift);
    put(s.w1);
    put(s.b1);
    put(s.w2);
  }
  return p;
}

void FewStepGenerator::set_parameters(const Eigen::VectorXd& params) {
  if (params.size() != parameter_count()) throw InputError("FewStepGenerator: parameter size mismatch");
  Eigen::Index o = 0;
  auto take = [&](auto& m) {
    m.reshaped() = params.segment(o, m.size());
    o += m.size();
  };
  for (auto& s : steps_) {
    take(s.scale);
    take(s.shift);
    take(s.w1);
    take(s.b1);
    take(s.w2);
  }
}

Eigen::MatrixXd FewStepGenerator::run(const Eigen::MatrixXd& z, const std::vector<Eigen::MatrixXd>& eps,
                                      int exit_step, Eigen::MatrixXd* exit_input) const {
  if (exit_step < 0 || exit_step >= kGeneratorSteps) throw InputError("FewStepGenerator: exit step out of range");
  if (z.rows() != dim_ || static_cast<int>(eps.size()) < exit_step) {
    throw InputError("FewStepGenerator: noise draws do not match the generator");
  }
  Eigen::MatrixXd u = noise_levels_[0] * z;
  Eigen::MatrixXd x;
  for (int k = 0; k <= exit_step; ++k) {
    if (k > 0) u = x + noise_levels_[std::size_t(k)] * eps[std::size_t(k - 1)];
    x = steps_[std::size_t(k)].apply(u);
  }
  if (exit_input) *exit_input = u;
  return x;
}

Eigen::MatrixXd FewStepGenerator::sample(int n, Rng& rng) const {
  const Eigen::MatrixXd z = normal_matrix(dim_, n, rng);
  std::vector<Eigen::MatrixXd> eps;
  for (int k = 1; k < kGeneratorSteps; ++k) eps.push_back(normal_matrix(dim_, n, rng));
  return run(z, eps, kGeneratorSteps - 1);
}

Eigen::VectorXd FewStepGenerator::step_vjp(int k, const Eigen::MatrixXd& u, const Eigen::MatrixXd& g,
                                           Eigen::MatrixXd* per_sample) const {
  const GeneratorStep& s = steps_[std::size_t(k)];
  const Eigen::Index n = u.cols();
  const Eigen::Index d = dim_;
  const Eigen::Index h = hidden_;
  const Eigen::Index offset = parameter_offset(k);
  Eigen::MatrixXd ps = Eigen::MatrixXd::Zero(parameter_count(), n);
  Eigen::Index o = offset;
  ps.middleRows(o, d) = g.cwiseProduct(u);
  o += d;
  ps.middleRows(o, d) = g;
  o += d;
  if (h > 0) {
    const Eigen::MatrixXd act = tanh_of((s.w1 * u).colwise() + s.b1);
    const Eigen::MatrixXd dh = ((s.w2.transpose() * g).array() * (1.0 - act.array().square())).matrix();
    // column-major flattening: w1(r, c) sits at r + c·H, w2(r, c) at r + c·d
    for (Eigen::Index c = 0; c < d; ++c) ps.middleRows(o + c * h, h) = dh.array().rowwise() * u.row(c).array();
    o += h * d;
    ps.middleRows(o, h) = dh;
    o += h;
    for (Eigen::Index c = 0; c < h; ++c) ps.middleRows(o + c * d, d) = g.array().rowwise() * act.row(c).array();
  }
  Eigen::VectorXd total = ps.rowwise().sum();
  if (per_sample) *per_sample = std::move(ps);
  return total;
}

// ------------------------------------------------------------ gradient

std::string to_string(Truncation t) { return t == Truncation::FinalStep ? "final" : "stochastic"; }
std::string to_string(Weighting w) { return w == Weighting::Uniform ? "uniform" : "sigma2"; }

Truncation truncation_from_string(const std::string& s) {
  if (s == "final") return Truncation::FinalStep;
  if (s == "stochastic") return Truncation::StochasticExit;
  throw InputError("unknown truncation '" + s + "' (expected final or stochastic)");
}

Weighting weighting_from_string(const std::string& s) {
  if (s == "uniform") return Weighting::Uniform;
  if (s == "sigma2") return Weighting::SigmaSquared;
  throw InputError("unknown weighting '" + s + "' (expected uniform or sigma2)");
}

namespace {

Draws draw_with_exit(const FewStepGenerator& gen, int batch, Rng& rng, int exit_step) {
  if (batch < 1) throw InputError("dmd: batch must be >= 1");
  Draws d;
  d.exit_step = exit_step;
  d.z = normal_matrix(gen.dim(), batch, rng);
  for (int k = 1; k < kGeneratorSteps; ++k) d.eps.push_back(normal_matrix(gen.dim(), batch, rng));
  d.forward_noise = normal_matrix(gen.dim(), batch, rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  d.t.resize(batch);
  for (int i = 0; i < batch; ++i) d.t(i) = unit(rng);
  return d;
}

int draw_exit(const GradOptions& options, Rng& rng) {
  if (options.truncation == Truncation::FinalStep) return kGeneratorSteps - 1;
  return std::uniform_int_distribution<int>(0, kGeneratorSteps - 1)(rng);
}

Eigen::VectorXd sigmas(const Schedule& schedule, const Eigen::VectorXd& t) {
  Eigen::VectorXd s(t.size());
  for (Eigen::Index i = 0; i < t.size(); ++i) s(i) = schedule.sigma(t(i));
  return s;
}

Gradient estimate(const FewStepGenerator& gen, const ScoreField& s_real, const ScoreField& s_fake,
                  const Schedule& schedule, const Draws& draws, const GradOptions& options,
                  const std::function<bool(const Eigen::VectorXd&)>& accept) {
  if (s_real.dim() != gen.dim() || s_fake.dim() != gen.dim()) {
    throw InputError("dmd: score fields and generator disagree on dimension");
  }
  Gradient g;
  g.exit_step = draws.exit_step;
  g.samples = gen.run(draws.z, draws.eps, draws.exit_step, &g.exit_input);
  const Eigen::VectorXd sig = sigmas(schedule, draws.t);
  const Eigen::MatrixXd xt = g.samples + draws.forward_noise * sig.asDiagonal();
  g.score_gap = s_real.evaluate(xt, sig) - s_fake.evaluate(xt, sig);
  if (options.weighting == Weighting::SigmaSquared) g.score_gap = g.score_gap * sig.array().square().matrix().asDiagonal();
  if (accept) {
    for (Eigen::Index i = 0; i < g.samples.cols(); ++i) {
      if (!accept(g.samples.col(i))) g.score_gap.col(i).setZero();
    }
  }

  const Eigen::Index n = g.samples.cols();
  Eigen::MatrixXd per_sample;
  gen.step_vjp(draws.exit_step, g.exit_input, g.score_gap, &per_sample);
  per_sample = -per_sample;
  g.grad = per_sample.rowwise().mean();
  if (n > 1) {
    const Eigen::MatrixXd centered = per_sample.colwise() - g.grad;
    g.std_error = (centered.rowwise().squaredNorm() / double(n - 1) / double(n)).cwiseSqrt();
  } else {
    g.std_error = Eigen::VectorXd::Zero(g.grad.size());
  }
  g.loss_proxy = 0.5 * g.score_gap.colwise().squaredNorm().mean();
  return g;
}

}  // namespace

Draws draw(const FewStepGenerator& gen, const Schedule& schedule, int batch, Rng& rng, const GradOptions& options) {
  schedule.validate();
  const int exit_step = draw_exit(options, rng);
  return draw_with_exit(gen, batch, rng, exit_step);
}

Gradient dmd_generator_grad(const FewStepGenerator& gen, const ScoreField& s_real, const ScoreField& s_fake,
                            const Schedule& schedule, const Draws& draws, const GradOptions& options) {
  return estimate(gen, s_real, s_fake, schedule, draws, options, {});
}

Gradient dmd_generator_grad(const FewStepGenerator& gen, const ScoreField& s_real, const ScoreField& s_fake,
                            const Schedule& schedule, int batch, Rng& rng, const GradOptions& options) {
  return dmd_generator_grad(gen, s_real, s_fake, schedule, draw(gen, schedule, batch, rng, options), options);
}

double dmd_surrogate(const FewStepGenerator& gen, const Gradient& est) {
  const Eigen::MatrixXd x = gen.step(est.exit_step).apply(est.exit_input);
  return -(est.score_gap.array() * x.array()).colwise().sum().mean();
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (m.size() != params.size()) {
    m = Eigen::VectorXd::Zero(params.size());
    v = Eigen::VectorXd::Zero(params.size());
  }
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1, double(t));
  const double c2 = 1.0 - std::pow(beta2, double(t));
  params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

// ------------------------------------------------------------ training

TrainResult dmd_train(const FewStepGenerator& gen, ScoreField& s_fake, const ScoreField& s_real,
                      const Schedule& schedule, const TrainConfig& config) {
  schedule.validate();
  if (s_real.trainable()) throw InputError("dmd_train: the real score must be frozen");
  if (!s_fake.trainable()) throw InputError("dmd_train: the fake score must be trainable");
  if (&s_fake == &s_real) throw InputError("dmd_train: real and fake scores must be distinct objects");
  if (config.iters < 0 || config.batch < 1 || config.fake_per_gen < 0 || config.fake_warmup < 0) {
    throw InputError("dmd_train: iters, fake_per_gen, fake_warmup must be >= 0 and batch >= 1");
  }

  TrainResult result{gen, {}, 0, 0};
  Rng rng(config.seed);
  Adam gen_opt(config.lr_gen);
  Adam fake_opt(config.lr_fake);
  Eigen::VectorXd fake_params = s_fake.parameters();
  Eigen::VectorXd gen_params = result.generator.parameters();

  auto check = [&](int step, const char* what, double value) {
    if (!std::isfinite(value) || value > config.divergence_limit) {
      std::ostringstream os;
      os << "dmd_train: " << what << " diverged at step " << step << " (value " << value << ", limit "
         << config.divergence_limit << ")";
      throw DivergenceError(os.str());
    }
  };

  auto fake_update = [&](int exit_step) {
    Draws d = draw_with_exit(result.generator, config.batch, rng, exit_step);
    Eigen::MatrixXd x = result.generator.run(d.z, d.eps, exit_step);
    if (config.accept) {
      std::vector<Eigen::Index> keep;
      for (Eigen::Index i = 0; i < x.cols(); ++i) {
        if (config.accept(x.col(i))) keep.push_back(i);
      }
      if (keep.empty()) return 0.0;
      x = x(Eigen::all, keep).eval();
      d.forward_noise = d.forward_noise(Eigen::all, keep).eval();
      d.t = d.t(keep).eval();
    }
    Eigen::VectorXd grad;
    const double loss = s_fake.dsm_loss(x, d.forward_noise, sigmas(schedule, d.t), &grad);
    fake_opt.step(fake_params, grad);
    s_fake.set_parameters(fake_params);
    ++result.fake_updates;
    return loss;
  };

  for (int w = 0; w < config.fake_warmup; ++w) check(0, "fake loss", fake_update(kGeneratorSteps - 1));

  for (int it = 0; it < config.iters; ++it) {
    const int exit_step = draw_exit(config.grad, rng);
    double fake_loss = 0.0;
    for (int j = 0; j < config.fake_per_gen; ++j) fake_loss = fake_update(exit_step);
    check(it, "fake loss", fake_loss);

    const Draws d = draw_with_exit(result.generator, config.batch, rng, exit_step);
    const Gradient g = estimate(result.generator, s_real, s_fake, schedule, d, config.grad, config.accept);
    check(it, "generator loss", g.loss_proxy);
    if (config.lr_gen_final >= 0.0 && config.iters > 1) {
      const double progress = double(it) / double(config.iters - 1);
      gen_opt.lr = config.lr_gen_final +
                   0.5 * (config.lr_gen - config.lr_gen_final) * (1.0 + std::cos(std::numbers::pi * progress));
    }
    gen_opt.step(gen_params, g.grad);
    if (!gen_params.allFinite()) throw DivergenceError("dmd_train: generator parameters became non-finite at step " + std::to_string(it));
    result.generator.set_parameters(gen_params);
    ++result.gen_updates;
    result.log.push_back({it, g.loss_proxy, fake_loss, g.grad.norm(), result.fake_updates});
  }
  return result;
}

void write_log_csv(const std::filesystem::path& path, const std::vector<LogRow>& log) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "step,gen_loss_proxy,fake_loss,grad_norm,fake_updates\n";
  out << std::setprecision(10);
  for (const auto& r : log) {
    out << r.step << ',' << r.gen_loss_proxy << ',' << r.fake_loss << ',' << r.grad_norm << ',' << r.fake_updates << '\n';
  }
}

// ------------------------------------------------------------ config

int ToyProblem::dim() const {
  return target_kind == "mixture" ? static_cast<int>(means.rows()) : static_cast<int>(mean.size());
}

std::unique_ptr<ScoreField> ToyProblem::make_real() const {
  if (target_kind == "gaussian") return std::make_unique<GaussianScore>(GaussianScore::from_std(mean, std));
  if (target_kind == "mixture") return std::make_unique<MixtureScore>(weights, means, stds);
  throw InputError("unknown target kind '" + target_kind + "'");
}

std::unique_ptr<ScoreField> ToyProblem::make_fake(Rng& rng) const {
  if (fake_kind == "mlp") return std::make_unique<MlpScore>(dim(), fake_hidden, rng);
  if (target_kind != "gaussian") throw InputError("the gaussian fake family needs a gaussian target");
  return std::make_unique<GaussianScore>(GaussianScore::from_std(mean, std, true));
}

namespace {

Eigen::VectorXd read_vector(const toml::node_view<const toml::node>& node, const std::string& name) {
  const toml::array* arr = node.as_array();
  if (!arr) throw InputError("dmd config: '" + name + "' must be an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(arr->size()));
  for (std::size_t i = 0; i < arr->size(); ++i) {
    const auto x = (*arr)[i].value<double>();
    if (!x) throw InputError("dmd config: '" + name + "' must contain only numbers");
    v(Eigen::Index(i)) = *x;
  }
  return v;
}

}  // namespace

ToyProblem load_toy_problem(const std::filesystem::path& path) {
  toml::table tbl;
  try {
    tbl = toml::parse_file(path.string());
  } catch (const toml::parse_error& e) {
    throw InputError("dmd config " + path.string() + ": " + std::string(e.description()));
  }
  const toml::table& root = tbl;
  ToyProblem p;
  TrainConfig& c = p.train;
  c.iters = root["iters"].value_or(c.iters);
  c.batch = root["batch"].value_or(c.batch);
  c.fake_per_gen = root["fake_per_gen"].value_or(c.fake_per_gen);
  c.lr_gen = root["lr_gen"].value_or(c.lr_gen);
  c.lr_fake = root["lr_fake"].value_or(c.lr_fake);
  c.lr_gen_final = root["lr_gen_final"].value_or(c.lr_gen_final);
  c.seed = static_cast<std::uint64_t>(root["seed"].value_or(std::int64_t(0)));
  c.fake_warmup = root["fake_warmup"].value_or(c.fake_warmup);
  c.grad.truncation = truncation_from_string(root["truncation"].value_or(to_string(c.grad.truncation)));
  c.grad.weighting = weighting_from_string(root["weighting"].value_or(to_string(c.grad.weighting)));
  p.schedule.sigma_min = root["sigma_min"].value_or(p.schedule.sigma_min);
  p.schedule.sigma_max = root["sigma_max"].value_or(p.schedule.sigma_max);
  p.generator_hidden = root["hidden"].value_or(p.generator_hidden);
  p.fake_kind = root["fake"].value_or(p.fake_kind);
  p.fake_hidden = root["fake_hidden"].value_or(p.fake_hidden);

  const auto target = root["target"];
  if (target) {
    p.target_kind = target["kind"].value_or(p.target_kind);
    if (p.target_kind == "gaussian") {
      if (target["mean"]) p.mean = read_vector(target["mean"], "target.mean");
      if (target["std"]) p.std = read_vector(target["std"], "target.std");
    } else if (p.target_kind == "mixture") {
      p.weights = read_vector(target["weights"], "target.weights");
      p.stds = read_vector(target["stds"], "target.stds");
      const toml::array* rows = target["means"].as_array();
      if (!rows || rows->empty()) throw InputError("dmd config: 'target.means' must be an array of arrays");
      for (std::size_t k = 0; k < rows->size(); ++k) {
        const Eigen::VectorXd m = read_vector(toml::node_view<const toml::node>(&(*rows)[k]), "target.means");
        if (k == 0) p.means.resize(m.size(), Eigen::Index(rows->size()));
        if (m.size() != p.means.rows()) throw InputError("dmd config: mixture means differ in dimension");
        p.means.col(Eigen::Index(k)) = m;
      }
    } else {
      throw InputError("dmd config: unknown target kind '" + p.target_kind + "'");
    }
  }
  if (p.target_kind == "gaussian" && p.mean.size() != p.std.size()) {
    throw InputError("dmd config: target mean and std differ in length");
  }
  if (p.fake_kind != "gaussian" && p.fake_kind != "mlp") {
    throw InputError("dmd config: fake must be 'gaussian' or 'mlp'");
  }
  if (p.fake_kind == "gaussian" && p.target_kind != "gaussian") {
    throw InputError("dmd config: the gaussian fake family needs a gaussian target");
  }
  p.schedule.validate();
  return p;
}

}  // namespace geomem::dmd
