#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "srp/grid.hpp"
#include "srp/random.hpp"

namespace srp {

// Finite abstraction space for simulated agents. Each abstraction is a
// template grid; stimuli are the template with i.i.d. per-tile flips at
// flip_rate. Descriptions are a finite vocabulary emitted through a K x V
// row-stochastic confusion matrix.
class AbstractionModel {
 public:
  AbstractionModel(std::vector<Grid> templates, std::vector<double> stimulus_prior,
                   std::vector<double> language_prior, double flip_rate, std::vector<std::string> vocabulary,
                   std::vector<std::vector<double>> description_likelihood);

  int grid_size() const noexcept { return templates_.front().size(); }
  int abstraction_count() const noexcept { return static_cast<int>(templates_.size()); }
  int vocabulary_size() const noexcept { return static_cast<int>(vocabulary_.size()); }
  double flip_rate() const noexcept { return flip_rate_; }

  const std::vector<Grid>& templates() const noexcept { return templates_; }
  const std::vector<double>& stimulus_prior() const noexcept { return stimulus_prior_; }
  const std::vector<double>& language_prior() const noexcept { return language_prior_; }
  const std::vector<std::string>& vocabulary() const noexcept { return vocabulary_; }
  const std::vector<std::vector<double>>& description_likelihood() const noexcept { return description_likelihood_; }

  // Index of an exact vocabulary entry, or -1.
  int find_description(std::string_view text) const;

  nlohmann::json to_json() const;
  static AbstractionModel from_json(const nlohmann::json& j);

 private:
  std::vector<Grid> templates_;
  std::vector<double> stimulus_prior_;
  std::vector<double> language_prior_;
  double flip_rate_;
  std::vector<std::string> vocabulary_;
  std::vector<std::vector<double>> description_likelihood_;
};

AbstractionModel load_model(const std::filesystem::path& path);
void save_model(const AbstractionModel& m, const std::filesystem::path& path);

// Random model with strictly positive priors. When `aligned` the language
// prior equals the stimulus prior elementwise.
AbstractionModel random_model(Rng& rng, int grid_size, int abstractions, int vocabulary, double flip_rate,
                              bool aligned);

// 7x7 preset whose language channel is coarser than its visual channel:
// four easily-described templates plus four random ones, and a vocabulary
// of four descriptions. Every random template is described with the words
// of its nearest simple template, and the language prior favours the simple
// templates.
AbstractionModel coarse_language_model(std::uint64_t seed = 7, double flip_rate = 0.05);

double stimulus_likelihood(const AbstractionModel& m, int abstraction, const Grid& x);
std::vector<double> posterior_from_stimulus(const AbstractionModel& m, const Grid& x);
// Throws kZeroEvidence when the description has zero marginal probability.
std::vector<double> posterior_from_description(const AbstractionModel& m, int description);

inline constexpr int kMaxExactTiles = 12;

// Exact distribution over all 2^(N*N) grids, indexed by Grid::state_index().
struct GridDistribution {
  int grid_size = 0;
  std::vector<double> mass;
};

double tv_distance(const GridDistribution& p, const GridDistribution& q);

// Exact grid-to-grid Markov kernel T(x'|x) = sum_k left(x,k) right(k,x').
// For the unimodal chain left = p(mu|x) and right = p_S(x'|mu); the
// multimodal chain folds the language bottleneck into left.
class GridKernel {
 public:
  GridKernel(int grid_size, Eigen::MatrixXd left, Eigen::MatrixXd right);

  int grid_size() const noexcept { return grid_size_; }
  std::size_t states() const noexcept { return static_cast<std::size_t>(left_.rows()); }
  const Eigen::MatrixXd& left() const noexcept { return left_; }
  const Eigen::MatrixXd& right() const noexcept { return right_; }

  Eigen::RowVectorXd row(std::uint64_t from) const;
  Eigen::MatrixXd dense() const;
  // pi * T without materializing T.
  Eigen::RowVectorXd apply(const Eigen::RowVectorXd& pi) const;

 private:
  int grid_size_;
  Eigen::MatrixXd left_;
  Eigen::MatrixXd right_;
};

GridKernel unimodal_transition(const AbstractionModel& m);
GridKernel multimodal_transition(const AbstractionModel& m);

struct StationaryOptions {
  double tolerance = 1e-12;  // L1 fixed-point residual
  int max_iterations = 100000;
};

// Fixed point of the factorized kernel: the K-state chain right*left is
// solved exactly (GTH elimination), lifted to grids, then polished by power
// iteration until the residual is below tolerance.
GridDistribution stationary_distribution(const GridKernel& kernel, const StationaryOptions& opts = {});

// Power iteration on an arbitrary dense row-stochastic kernel.
Eigen::RowVectorXd stationary_power_iteration(const Eigen::MatrixXd& kernel, const StationaryOptions& opts = {});

// Grassmann-Taksar-Heyman elimination: stationary vector of an irreducible
// row-stochastic matrix using only off-diagonal entries (no cancellation).
Eigen::RowVectorXd stationary_gth(const Eigen::MatrixXd& kernel);

double stationary_residual(const GridKernel& kernel, const GridDistribution& pi);

enum class PriorKind { kStimulus, kLanguage };

GridDistribution prior_predictive(const AbstractionModel& m, PriorKind which = PriorKind::kStimulus);

enum class DecisionRule { kSample, kMap };

struct AgentStep {
  int abstraction = 0;
  std::variant<Grid, int> output;  // Grid for reproduce/render, description index for describe
};

// Bayesian agent: infer an abstraction from the input (sampling the
// posterior, or its argmax under kMap), then sample the output from the
// corresponding likelihood.
class BayesianAgent {
 public:
  explicit BayesianAgent(AbstractionModel model, DecisionRule rule = DecisionRule::kSample)
      : model_(std::move(model)), rule_(rule) {}

  const AbstractionModel& model() const noexcept { return model_; }
  DecisionRule rule() const noexcept { return rule_; }

  AgentStep reproduce(const Grid& x, Rng& rng) const;
  AgentStep describe(const Grid& x, Rng& rng) const;
  AgentStep render(int description, Rng& rng) const;

  Grid sample_stimulus(int abstraction, Rng& rng) const;
  int sample_description(int abstraction, Rng& rng) const;

 private:
  int choose(const std::vector<double>& posterior, Rng& rng) const;

  AbstractionModel model_;
  DecisionRule rule_;
};

// Grid-valued Markov chain driven by an agent: unimodal (reproduce) or
// multimodal (describe then render). Returns a histogram over the 2^(N*N)
// states visited after `burn_in`.
GridDistribution simulate_chain_histogram(const BayesianAgent& agent, bool multimodal, const Grid& start,
                                          std::size_t steps, std::size_t burn_in, std::uint64_t seed);

}  // namespace srp
