#pragma once

#include "geomem/memory.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace geomem::dmd {

// Toy distribution matching distillation in d = 1 or 2 dimensions. Samples are
// stored column-wise (d × batch).

/// Variance-exploding forward process x_t = x + σ(t)·ε with
/// σ(t) = σ_min·(σ_max/σ_min)^t, t ~ U(0, 1).
struct Schedule {
  double sigma_min = 0.01;
  double sigma_max = 5.0;

  double sigma(double t) const;
  void validate() const;
};

/// Noise-conditional score ∇ log p_σ(x).
class ScoreField {
 public:
  virtual ~ScoreField() = default;

  virtual int dim() const = 0;
  /// Column i of x is scored at noise level sigma(i).
  virtual Eigen::MatrixXd evaluate(const Eigen::MatrixXd& x, const Eigen::VectorXd& sigma) const = 0;
  Eigen::VectorXd evaluate(const Eigen::VectorXd& x, double t, const Schedule& schedule) const;

  virtual bool trainable() const { return false; }
  virtual Eigen::VectorXd parameters() const { return {}; }
  virtual void set_parameters(const Eigen::VectorXd& /*params*/) {}
  /// Denoising score matching loss mean‖σ·s(x0 + σε) + ε‖² / d and its parameter gradient.
  virtual double dsm_loss(const Eigen::MatrixXd& x0, const Eigen::MatrixXd& eps, const Eigen::VectorXd& sigma,
                          Eigen::VectorXd* grad) const;

  virtual std::unique_ptr<ScoreField> clone() const = 0;
};

/// Diagonal Gaussian N(mean, diag(exp(log_var))) convolved with the forward
/// kernel. Serves both as the analytic real score and as the closed-form fake
/// family (parameters: mean, log_var). `guidance` scales the score (1 = off).
class GaussianScore final : public ScoreField {
 public:
  GaussianScore(Eigen::VectorXd mean, Eigen::VectorXd log_var, bool trainable = false, double guidance = 1.0);
  static GaussianScore from_std(const Eigen::VectorXd& mean, const Eigen::VectorXd& std, bool trainable = false);

  int dim() const override { return static_cast<int>(mean_.size()); }
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& x, const Eigen::VectorXd& sigma) const override;
  using ScoreField::evaluate;
  bool trainable() const override { return trainable_; }
  Eigen::VectorXd parameters() const override;
  void set_parameters(const Eigen::VectorXd& params) override;
  double dsm_loss(const Eigen::MatrixXd& x0, const Eigen::MatrixXd& eps, const Eigen::VectorXd& sigma,
                  Eigen::VectorXd* grad) const override;
  std::unique_ptr<ScoreField> clone() const override { return std::make_unique<GaussianScore>(*this); }

  const Eigen::VectorXd& mean() const { return mean_; }
  Eigen::VectorXd variance() const { return log_var_.array().exp(); }

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd log_var_;
  bool trainable_;
  double guidance_;
};

/// Frozen mixture of isotropic Gaussians.
class MixtureScore final : public ScoreField {
 public:
  MixtureScore(Eigen::VectorXd weights, Eigen::MatrixXd means, Eigen::VectorXd stds, double guidance = 1.0);

  int dim() const override { return static_cast<int>(means_.rows()); }
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& x, const Eigen::VectorXd& sigma) const override;
  using ScoreField::evaluate;
  std::unique_ptr<ScoreField> clone() const override { return std::make_unique<MixtureScore>(*this); }

  Eigen::MatrixXd sample(int n, Rng& rng) const;

 private:
  Eigen::VectorXd weights_;
  Eigen::MatrixXd means_;  // d × K
  Eigen::VectorXd stds_;
  double guidance_;
};

/// Trainable ε-prediction network: ε̂ = W2·tanh(W1·[x; log σ] + b1) + b2, score = −ε̂/σ.
class MlpScore final : public ScoreField {
 public:
  MlpScore(int dim, int hidden, Rng& rng);

  int dim() const override { return dim_; }
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& x, const Eigen::VectorXd& sigma) const override;
  using ScoreField::evaluate;
  bool trainable() const override { return true; }
  Eigen::VectorXd parameters() const override;
  void set_parameters(const Eigen::VectorXd& params) override;
  double dsm_loss(const Eigen::MatrixXd& x0, const Eigen::MatrixXd& eps, const Eigen::VectorXd& sigma,
                  Eigen::VectorXd* grad) const override;
  std::unique_ptr<ScoreField> clone() const override { return std::make_unique<MlpScore>(*this); }

 private:
  Eigen::MatrixXd predict(const Eigen::MatrixXd& x, const Eigen::VectorXd& sigma, Eigen::MatrixXd* hidden) const;

  int dim_;
  Eigen::MatrixXd w1_;  // H × (d + 1)
  Eigen::VectorXd b1_;
  Eigen::MatrixXd w2_;  // d × H
  Eigen::VectorXd b2_;
};

inline constexpr int kGeneratorSteps = 4;

/// One denoising step: x̂0 = scale ⊙ u + shift + W2·tanh(W1·u + b1), where u is
/// the step's noisy input. hidden = 0 drops the residual network.
struct GeneratorStep {
  Eigen::VectorXd scale;
  Eigen::VectorXd shift;
  Eigen::MatrixXd w1;  // H × d
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // d × H

  int parameter_count() const;
  Eigen::MatrixXd apply(const Eigen::MatrixXd& u) const;
};

/// Four-step student. Step k receives u_k = x̂0_{k-1} + τ_k·ε_k (with x̂0_{-1} = 0)
/// and predicts x̂0_k; the sample is x̂0_3.
class FewStepGenerator {
 public:
  /// Initialized so that every x̂0_k is exactly N(0, I): affine scales
  /// 1/τ_0 then 1/sqrt(1 + τ_k²), zero shifts, zero output layer.
  FewStepGenerator(int dim, int hidden, Rng& rng, std::vector<double> noise_levels = {4.0, 1.0, 0.3, 0.1});

  int dim() const { return dim_; }
  int steps() const { return kGeneratorSteps; }
  const std::vector<double>& noise_levels() const { return noise_levels_; }
  const GeneratorStep& step(int k) const { return steps_[std::size_t(k)]; }

  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& params);
  int parameter_count() const;
  /// Offset of step k's block inside parameters().
  int parameter_offset(int k) const;

  /// Runs steps 0..exit_step. u_0 = τ_0·z; eps[k-1] (d × n) re-noises the input of step k ≥ 1.
  /// Writes the input of the exit step to exit_input when given.
  Eigen::MatrixXd run(const Eigen::MatrixXd& z, const std::vector<Eigen::MatrixXd>& eps, int exit_step,
                      Eigen::MatrixXd* exit_input = nullptr) const;
  /// Full 4-step samples.
  Eigen::MatrixXd sample(int n, Rng& rng) const;

  /// gᵀ·∂x̂0/∂θ for step k evaluated at inputs u, summed over columns; length parameter_count(),
  /// zero outside step k. per_sample (P × n) receives the per-column contributions when given.
  Eigen::VectorXd step_vjp(int k, const Eigen::MatrixXd& u, const Eigen::MatrixXd& g,
                           Eigen::MatrixXd* per_sample = nullptr) const;

 private:
  int dim_;
  int hidden_;
  std::vector<double> noise_levels_;
  std::vector<GeneratorStep> steps_;
};

/// Which step the generator gradient flows through. FinalStep always exits
/// after the last step; StochasticExit draws the exit step uniformly per batch
/// and backpropagates through that step only (its input is treated as constant).
enum class Truncation { FinalStep, StochasticExit };
enum class Weighting { Uniform, SigmaSquared };

std::string to_string(Truncation t);
std::string to_string(Weighting w);
Truncation truncation_from_string(const std::string& s);
Weighting weighting_from_string(const std::string& s);

struct GradOptions {
  Truncation truncation = Truncation::FinalStep;
  Weighting weighting = Weighting::Uniform;
};

/// Random draws behind one gradient estimate, kept so the estimate can be replayed.
struct Draws {
  Eigen::MatrixXd z;
  std::vector<Eigen::MatrixXd> eps;  // re-noising of steps 1..3
  Eigen::MatrixXd forward_noise;     // ε of the forward kernel
  Eigen::VectorXd t;
  int exit_step = kGeneratorSteps - 1;
};

Draws draw(const FewStepGenerator& gen, const Schedule& schedule, int batch, Rng& rng, const GradOptions& options);

struct Gradient {
  Eigen::VectorXd grad;       // over all generator parameters (zero outside the exit step)
  Eigen::VectorXd std_error;  // Monte-Carlo standard error per parameter
  Eigen::MatrixXd score_gap;  // w(t)·(s_real − s_fake)(x_t, t), d × batch, treated as constant
  Eigen::MatrixXd samples;    // generator outputs x at the exit step
  Eigen::MatrixXd exit_input; // the exit step's input u, held constant by the truncation
  double loss_proxy = 0.0;    // mean ½‖score_gap‖²
  int exit_step = kGeneratorSteps - 1;
};

/// Monte-Carlo estimate of ∇θ L = −E_{z,t,ε}[(s_real − s_fake)(x_t, t)ᵀ · ∂x/∂θ].
Gradient dmd_generator_grad(const FewStepGenerator& gen, const ScoreField& s_real, const ScoreField& s_fake,
                            const Schedule& schedule, const Draws& draws, const GradOptions& options = {});
Gradient dmd_generator_grad(const FewStepGenerator& gen, const ScoreField& s_real, const ScoreField& s_fake,
                            const Schedule& schedule, int batch, Rng& rng, const GradOptions& options = {});

/// Surrogate whose θ-gradient is the truncated DMD gradient:
/// −mean_i score_gapᵢᵀ · step_K(u_i; θ), with score_gap and the exit input u held fixed.
/// Used for finite-difference checks.
double dmd_surrogate(const FewStepGenerator& gen, const Gradient& estimate);

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Eigen::VectorXd m, v;
  long long t = 0;

  explicit Adam(double learning_rate = 1e-3) : lr(learning_rate) {}
  /// In-place descent step.
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
};

struct TrainConfig {
  int iters = 2000;
  int batch = 256;
  int fake_per_gen = 5;
  double lr_gen = 0.01;
  double lr_fake = 0.05;
  double lr_gen_final = -1.0;  // cosine-anneal the generator rate to this value; < 0 keeps it constant
  std::uint64_t seed = 0;
  int fake_warmup = 0;  // extra fake updates before the first generator update
  GradOptions grad;
  double divergence_limit = 1e6;
  /// Optional rejection hook on generator samples; rejected columns get no weight.
  std::function<bool(const Eigen::VectorXd&)> accept;
};

struct LogRow {
  int step = 0;
  double gen_loss_proxy = 0.0;
  double fake_loss = 0.0;
  double grad_norm = 0.0;
  long long fake_updates = 0;  // cumulative
};

struct TrainResult {
  FewStepGenerator generator;
  std::vector<LogRow> log;
  long long fake_updates = 0;
  long long gen_updates = 0;
};

/// Alternates fake_per_gen denoising-score-matching updates of s_fake (on fresh
/// generator samples) with one generator update. s_real must be frozen and
/// s_fake trainable. Throws DivergenceError when a loss exceeds the limit or
/// turns non-finite.
TrainResult dmd_train(const FewStepGenerator& gen, ScoreField& s_fake, const ScoreField& s_real,
                      const Schedule& schedule, const TrainConfig& config);

void write_log_csv(const std::filesystem::path& path, const std::vector<LogRow>& log);

/// Toy problem as read from TOML:
///   iters, batch, fake_per_gen, lr_gen, lr_fake, seed, [fake_warmup, truncation, weighting,
///   sigma_min, sigma_max, hidden, fake = "gaussian" | "mlp", fake_hidden]
///   [target] kind = "gaussian" (mean, std arrays) | "mixture" (weights, means as rows, stds)
struct ToyProblem {
  TrainConfig train;
  Schedule schedule;
  std::string target_kind = "gaussian";
  Eigen::VectorXd mean = Eigen::VectorXd::Constant(1, 3.0);
  Eigen::VectorXd std = Eigen::VectorXd::Constant(1, 0.5);
  Eigen::VectorXd weights;
  Eigen::MatrixXd means;  // d × K
  Eigen::VectorXd stds;
  int generator_hidden = 0;
  std::string fake_kind = "gaussian";
  int fake_hidden = 64;

  int dim() const;
  std::unique_ptr<ScoreField> make_real() const;
  /// Gaussian family: trainable copy of the target. MLP family: fresh network from rng.
  std::unique_ptr<ScoreField> make_fake(Rng& rng) const;
};

ToyProblem load_toy_problem(const std::filesystem::path& path);

}  // namespace geomem::dmd
