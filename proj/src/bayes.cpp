#include "srp/bayes.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include "srp/error.hpp"

namespace srp {

namespace {

constexpr double kNormTolerance = 1e-12;

void check_distribution(const std::vector<double>& p, std::size_t expected, const std::string& what) {
  if (p.size() != expected) {
    throw Error(ErrorKind::kDimensionMismatch,
                what + " has " + std::to_string(p.size()) + " entries, expected " + std::to_string(expected));
  }
  double sum = 0.0;
  for (double v : p) {
    if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorKind::kInvalidArgument, what + " must be strictly positive");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kNormTolerance) throw Error(ErrorKind::kInvalidArgument, what + " must sum to 1");
}

std::vector<double> normalize_log_weights(std::vector<double> logw) {
  const double top = *std::max_element(logw.begin(), logw.end());
  double sum = 0.0;
  for (auto& w : logw) {
    w = std::exp(w - top);
    sum += w;
  }
  for (auto& w : logw) w /= sum;
  return logw;
}

void require_exact(int grid_size) {
  if (grid_size * grid_size > kMaxExactTiles) {
    throw Error(ErrorKind::kStateSpaceTooLarge, "exact mode needs N*N <= " + std::to_string(kMaxExactTiles) +
                                                    ", got N = " + std::to_string(grid_size));
  }
}

}  // namespace

AbstractionModel::AbstractionModel(std::vector<Grid> templates, std::vector<double> stimulus_prior,
                                   std::vector<double> language_prior, double flip_rate,
                                   std::vector<std::string> vocabulary,
                                   std::vector<std::vector<double>> description_likelihood)
    : templates_(std::move(templates)),
      stimulus_prior_(std::move(stimulus_prior)),
      language_prior_(std::move(language_prior)),
      flip_rate_(flip_rate),
      vocabulary_(std::move(vocabulary)),
      description_likelihood_(std::move(description_likelihood)) {
  if (templates_.empty()) throw Error(ErrorKind::kInvalidArgument, "model needs at least one abstraction");
  for (const auto& t : templates_) {
    if (t.size() != templates_.front().size()) throw Error(ErrorKind::kSizeMismatch, "templates differ in size");
  }
  const auto k = templates_.size();
  check_distribution(stimulus_prior_, k, "stimulus prior");
  check_distribution(language_prior_, k, "language prior");
  if (!(flip_rate_ > 0.0 && flip_rate_ < 0.5)) {
    throw Error(ErrorKind::kInvalidArgument, "flip rate must lie in (0, 0.5)");
  }
  if (vocabulary_.empty()) throw Error(ErrorKind::kInvalidArgument, "vocabulary is empty");
  if (description_likelihood_.size() != k) {
    throw Error(ErrorKind::kDimensionMismatch, "description likelihood needs one row per abstraction");
  }
  for (const auto& row : description_likelihood_) {
    if (row.size() != vocabulary_.size()) {
      throw Error(ErrorKind::kDimensionMismatch, "description likelihood needs one column per description");
    }
    double sum = 0.0;
    for (double v : row) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw Error(ErrorKind::kInvalidArgument, "description likelihood entries must be nonnegative");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kNormTolerance) {
      throw Error(ErrorKind::kInvalidArgument, "description likelihood rows must sum to 1");
    }
  }
}

int AbstractionModel::find_description(std::string_view text) const {
  for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
    if (vocabulary_[i] == text) return static_cast<int>(i);
  }
  return -1;
}

nlohmann::json AbstractionModel::to_json() const {
  nlohmann::json j;
  j["grid_size"] = grid_size();
  j["flip_rate"] = flip_rate_;
  j["templates"] = nlohmann::json::array();
  for (const auto& t : templates_) j["templates"].push_back(serialize_grid(t));
  j["stimulus_prior"] = stimulus_prior_;
  j["language_prior"] = language_prior_;
  j["vocabulary"] = vocabulary_;
  j["description_likelihood"] = description_likelihood_;
  return j;
}

AbstractionModel AbstractionModel::from_json(const nlohmann::json& j) {
  try {
    std::vector<Grid> templates;
    for (const auto& t : j.at("templates")) templates.push_back(parse_grid(t.get<std::string>()));
    if (j.contains("grid_size") && !templates.empty() && j.at("grid_size").get<int>() != templates.front().size()) {
      throw Error(ErrorKind::kSizeMismatch, "grid_size disagrees with the templates");
    }
    return AbstractionModel(std::move(templates), j.at("stimulus_prior").get<std::vector<double>>(),
                            j.at("language_prior").get<std::vector<double>>(), j.at("flip_rate").get<double>(),
                            j.at("vocabulary").get<std::vector<std::string>>(),
                            j.at("description_likelihood").get<std::vector<std::vector<double>>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParseError, std::string("model definition: ") + e.what());
  }
}

AbstractionModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParseError, path.string() + ": " + e.what());
  }
  return AbstractionModel::from_json(j);
}

void save_model(const AbstractionModel& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIoError, "cannot write " + path.string());
  out << m.to_json().dump(2) << '\n';
}

namespace {

std::vector<double> random_simplex(Rng& rng, int n, double floor) {
  std::vector<double> p(static_cast<std::size_t>(n));
  for (auto& v : p) v = floor + uniform01(rng);
  const double sum = std::accumulate(p.begin(), p.end(), 0.0);
  for (auto& v : p) v /= sum;
  return p;
}

std::string placeholder_description(int i) {
  return "symbolic description number " + std::to_string(i) + " of the board";
}

}  // namespace

AbstractionModel random_model(Rng& rng, int grid_size, int abstractions, int vocabulary, double flip_rate,
                              bool aligned) {
  std::vector<Grid> templates;
  for (int k = 0; k < abstractions; ++k) templates.push_back(random_grid(rng, grid_size, 0.5));
  auto stimulus_prior = random_simplex(rng, abstractions, 0.05);
  auto language_prior = aligned ? stimulus_prior : random_simplex(rng, abstractions, 0.05);
  std::vector<std::string> vocab;
  for (int v = 0; v < vocabulary; ++v) vocab.push_back(placeholder_description(v));
  std::vector<std::vector<double>> lik;
  for (int k = 0; k < abstractions; ++k) {
    // Sparse-ish rows so the language channel is informative but lossy.
    std::vector<double> row(static_cast<std::size_t>(vocabulary));
    for (auto& v : row) v = uniform01(rng) < 0.5 ? uniform01(rng) : 0.0;
    row[static_cast<std::size_t>(k % vocabulary)] += 1.0;
    const double sum = std::accumulate(row.begin(), row.end(), 0.0);
    for (auto& v : row) v /= sum;
    lik.push_back(std::move(row));
  }
  return AbstractionModel(std::move(templates), std::move(stimulus_prior), std::move(language_prior), flip_rate,
                          std::move(vocab), std::move(lik));
}

AbstractionModel coarse_language_model(std::uint64_t seed, double flip_rate) {
  constexpr int n = 7;
  std::vector<Grid> templates;
  templates.emplace_back(n);  // blank
  Grid cross(n);
  for (int i = 0; i < n; ++i) {
    cross.set(3, i, true);
    cross.set(i, 3, true);
  }
  templates.push_back(cross);
  Grid square(n);
  for (int r = 2; r <= 4; ++r)
    for (int c = 2; c <= 4; ++c) square.set(r, c, true);
  templates.push_back(square);
  Grid diagonal(n);
  for (int i = 0; i < n; ++i) diagonal.set(i, i, true);
  templates.push_back(diagonal);
  constexpr int kSimple = 4;

  Rng rng(seed);
  for (int k = 0; k < 4; ++k) templates.push_back(random_grid(rng, n, 0.5));

  std::vector<std::string> vocab{
      "a completely white board with no red tiles",
      "a red plus sign crossing the center of a white board",
      "a small red square of three by three tiles in the middle",
      "a red diagonal line from the top left to the bottom right corner",
  };

  const auto k_total = templates.size();
  std::vector<std::vector<double>> lik(k_total, std::vector<double>(vocab.size(), 0.01));
  for (std::size_t k = 0; k < k_total; ++k) {
    std::size_t target = k;
    if (k >= kSimple) {
      int best = n * n + 1;
      for (std::size_t s = 0; s < kSimple; ++s) {
        const int d = hamming(templates[k], templates[s]);
        if (d < best) {
          best = d;
          target = s;
        }
      }
    }
    lik[k][target] = 0.97;
  }

  std::vector<double> stimulus_prior(k_total, 1.0 / static_cast<double>(k_total));
  std::vector<double> language_prior(k_total);
  for (std::size_t k = 0; k < k_total; ++k) language_prior[k] = k < kSimple ? 0.24 : 0.01;
  return AbstractionModel(std::move(templates), std::move(stimulus_prior), std::move(language_prior), flip_rate,
                          std::move(vocab), std::move(lik));
}

double stimulus_likelihood(const AbstractionModel& m, int abstraction, const Grid& x) {
  if (abstraction < 0 || abstraction >= m.abstraction_count()) {
    throw Error(ErrorKind::kInvalidArgument, "abstraction index out of range");
  }
  const int h = hamming(m.templates()[static_cast<std::size_t>(abstraction)], x);
  const double eps = m.flip_rate();
  return std::pow(eps, h) * std::pow(1.0 - eps, x.tile_count() - h);
}

std::vector<double> posterior_from_stimulus(const AbstractionModel& m, const Grid& x) {
  const double log_eps = std::log(m.flip_rate());
  const double log_keep = std::log1p(-m.flip_rate());
  std::vector<double> logw(static_cast<std::size_t>(m.abstraction_count()));
  for (std::size_t k = 0; k < logw.size(); ++k) {
    const int h = hamming(m.templates()[k], x);
    logw[k] = h * log_eps + (x.tile_count() - h) * log_keep + std::log(m.stimulus_prior()[k]);
  }
  return normalize_log_weights(std::move(logw));
}

std::vector<double> posterior_from_description(const AbstractionModel& m, int description) {
  if (description < 0 || description >= m.vocabulary_size()) {
    throw Error(ErrorKind::kInvalidArgument, "description index out of range");
  }
  std::vector<double> post(static_cast<std::size_t>(m.abstraction_count()));
  double evidence = 0.0;
  for (std::size_t k = 0; k < post.size(); ++k) {
    post[k] = m.description_likelihood()[k][static_cast<std::size_t>(description)] * m.language_prior()[k];
    evidence += post[k];
  }
  if (!(evidence > 0.0)) {
    throw Error(ErrorKind::kZeroEvidence, "description " + std::to_string(description) + " has zero probability");
  }
  for (auto& v : post) v /= evidence;
  return post;
}

double tv_distance(const GridDistribution& p, const GridDistribution& q) {
  if (p.grid_size != q.grid_size || p.mass.size() != q.mass.size()) {
    throw Error(ErrorKind::kSupportMismatch, "distributions live on different grid spaces");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < p.mass.size(); ++i) sum += std::abs(p.mass[i] - q.mass[i]);
  return 0.5 * sum;
}

GridKernel::GridKernel(int grid_size, Eigen::MatrixXd left, Eigen::MatrixXd right)
    : grid_size_(grid_size), left_(std::move(left)), right_(std::move(right)) {
  if (left_.cols() != right_.rows() || left_.rows() != right_.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "kernel factors do not compose to a square kernel");
  }
}

Eigen::RowVectorXd GridKernel::row(std::uint64_t from) const {
  return left_.row(static_cast<Eigen::Index>(from)) * right_;
}

Eigen::MatrixXd GridKernel::dense() const { return left_ * right_; }

Eigen::RowVectorXd GridKernel::apply(const Eigen::RowVectorXd& pi) const { return (pi * left_) * right_; }

namespace {

// K x S matrix of p_S(x | mu) over every grid x.
Eigen::MatrixXd likelihood_matrix(const AbstractionModel& m) {
  const int tiles = m.grid_size() * m.grid_size();
  const std::uint64_t states = std::uint64_t{1} << tiles;
  const double eps = m.flip_rate();
  std::vector<double> by_distance(static_cast<std::size_t>(tiles + 1));
  for (int h = 0; h <= tiles; ++h) by_distance[static_cast<std::size_t>(h)] = std::pow(eps, h) * std::pow(1.0 - eps, tiles - h);
  Eigen::MatrixXd lik(m.abstraction_count(), static_cast<Eigen::Index>(states));
  for (int k = 0; k < m.abstraction_count(); ++k) {
    const auto t = m.templates()[static_cast<std::size_t>(k)].state_index();
    for (std::uint64_t x = 0; x < states; ++x) {
      lik(k, static_cast<Eigen::Index>(x)) = by_distance[static_cast<std::size_t>(std::popcount(t ^ x))];
    }
  }
  return lik;
}

// S x K posterior p(mu | x) from the likelihood matrix.
Eigen::MatrixXd posterior_matrix(const AbstractionModel& m, const Eigen::MatrixXd& lik) {
  Eigen::RowVectorXd prior(m.abstraction_count());
  for (int k = 0; k < m.abstraction_count(); ++k) prior(k) = m.stimulus_prior()[static_cast<std::size_t>(k)];
  Eigen::MatrixXd post = (lik.array().colwise() * prior.transpose().array()).transpose();
  post.array().colwise() /= post.rowwise().sum().array();
  return post;
}

// K x K language channel: sum_l p_L(l | mu) p(mu' | l).
Eigen::MatrixXd language_channel(const AbstractionModel& m) {
  const int k_count = m.abstraction_count();
  Eigen::MatrixXd channel = Eigen::MatrixXd::Zero(k_count, k_count);
  for (int l = 0; l < m.vocabulary_size(); ++l) {
    double evidence = 0.0;
    for (int k = 0; k < k_count; ++k) {
      evidence += m.description_likelihood()[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)] *
                  m.language_prior()[static_cast<std::size_t>(k)];
    }
    if (!(evidence > 0.0)) continue;  // never emitted
    const auto post = posterior_from_description(m, l);
    for (int k = 0; k < k_count; ++k) {
      const double p_l = m.description_likelihood()[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)];
      for (int k2 = 0; k2 < k_count; ++k2) channel(k, k2) += p_l * post[static_cast<std::size_t>(k2)];
    }
  }
  return channel;
}

}  // namespace

GridKernel unimodal_transition(const AbstractionModel& m) {
  require_exact(m.grid_size());
  auto lik = likelihood_matrix(m);
  auto post = posterior_matrix(m, lik);
  return GridKernel(m.grid_size(), std::move(post), std::move(lik));
}

GridKernel multimodal_transition(const AbstractionModel& m) {
  require_exact(m.grid_size());
  auto lik = likelihood_matrix(m);
  Eigen::MatrixXd left = posterior_matrix(m, lik) * language_channel(m);
  return GridKernel(m.grid_size(), std::move(left), std::move(lik));
}

Eigen::RowVectorXd stationary_gth(const Eigen::MatrixXd& kernel) {
  const Eigen::Index n = kernel.rows();
  if (kernel.cols() != n || n == 0) throw Error(ErrorKind::kDimensionMismatch, "kernel must be square");
  Eigen::MatrixXd a = kernel;
  for (Eigen::Index k = n - 1; k > 0; --k) {
    const double s = a.row(k).head(k).sum();
    if (!(s > 0.0)) throw Error(ErrorKind::kNoConvergence, "kernel is reducible; stationary distribution not unique");
    a.col(k).head(k) /= s;
    a.topLeftCorner(k, k).noalias() += a.col(k).head(k) * a.row(k).head(k);
  }
  Eigen::RowVectorXd pi(n);
  pi(0) = 1.0;
  for (Eigen::Index j = 1; j < n; ++j) pi(j) = pi.head(j).dot(a.col(j).head(j));
  return pi / pi.sum();
}

Eigen::RowVectorXd stationary_power_iteration(const Eigen::MatrixXd& kernel, const StationaryOptions& opts) {
  const Eigen::Index n = kernel.rows();
  if (kernel.cols() != n || n == 0) throw Error(ErrorKind::kDimensionMismatch, "kernel must be square");
  Eigen::RowVectorXd pi = Eigen::RowVectorXd::Constant(n, 1.0 / static_cast<double>(n));
  for (int it = 0; it < opts.max_iterations; ++it) {
    Eigen::RowVectorXd next = pi * kernel;
    next /= next.sum();
    const double residual = (next - pi).lpNorm<1>();
    pi = std::move(next);
    if (residual < opts.tolerance) return pi;
  }
  throw Error(ErrorKind::kNoConvergence,
              "power iteration did not reach residual " + std::to_string(opts.tolerance) + " in " +
                  std::to_string(opts.max_iterations) + " iterations");
}

double stationary_residual(const GridKernel& kernel, const GridDistribution& pi) {
  const Eigen::RowVectorXd v = Eigen::Map<const Eigen::RowVectorXd>(pi.mass.data(), static_cast<Eigen::Index>(pi.mass.size()));
  return (kernel.apply(v) - v).lpNorm<1>();
}

GridDistribution stationary_distribution(const GridKernel& kernel, const StationaryOptions& opts) {
  const Eigen::MatrixXd reduced = kernel.right() * kernel.left();
  const Eigen::RowVectorXd nu = stationary_gth(reduced);
  Eigen::RowVectorXd pi = nu * kernel.right();
  pi /= pi.sum();
  for (int it = 0;; ++it) {
    Eigen::RowVectorXd next = kernel.apply(pi);
    next /= next.sum();
    const double residual = (next - pi).lpNorm<1>();
    pi = std::move(next);
    if (residual < opts.tolerance) break;
    if (it >= opts.max_iterations) {
      throw Error(ErrorKind::kNoConvergence, "stationary residual stuck at " + std::to_string(residual));
    }
  }
  GridDistribution out{kernel.grid_size(), std::vector<double>(pi.data(), pi.data() + pi.size())};
  return out;
}

GridDistribution prior_predictive(const AbstractionModel& m, PriorKind which) {
  require_exact(m.grid_size());
  const auto& prior = which == PriorKind::kStimulus ? m.stimulus_prior() : m.language_prior();
  const Eigen::RowVectorXd p = Eigen::Map<const Eigen::RowVectorXd>(prior.data(), static_cast<Eigen::Index>(prior.size()));
  const Eigen::RowVectorXd pred = p * likelihood_matrix(m);
  return GridDistribution{m.grid_size(), std::vector<double>(pred.data(), pred.data() + pred.size())};
}

int BayesianAgent::choose(const std::vector<double>& posterior, Rng& rng) const {
  if (rule_ == DecisionRule::kMap) {
    return static_cast<int>(std::max_element(posterior.begin(), posterior.end()) - posterior.begin());
  }
  return static_cast<int>(sample_index(posterior, rng));
}

Grid BayesianAgent::sample_stimulus(int abstraction, Rng& rng) const {
  Grid out = model_.templates().at(static_cast<std::size_t>(abstraction));
  for (int r = 0; r < out.size(); ++r) {
    for (int c = 0; c < out.size(); ++c) {
      if (uniform01(rng) < model_.flip_rate()) out.set(r, c, out.at(r, c) == 0);
    }
  }
  return out;
}

int BayesianAgent::sample_description(int abstraction, Rng& rng) const {
  return static_cast<int>(sample_index(model_.description_likelihood().at(static_cast<std::size_t>(abstraction)), rng));
}

AgentStep BayesianAgent::reproduce(const Grid& x, Rng& rng) const {
  const int mu = choose(posterior_from_stimulus(model_, x), rng);
  return {mu, sample_stimulus(mu, rng)};
}

AgentStep BayesianAgent::describe(const Grid& x, Rng& rng) const {
  const int mu = choose(posterior_from_stimulus(model_, x), rng);
  return {mu, sample_description(mu, rng)};
}

AgentStep BayesianAgent::render(int description, Rng& rng) const {
  const int mu = choose(posterior_from_description(model_, description), rng);
  return {mu, sample_stimulus(mu, rng)};
}

GridDistribution simulate_chain_histogram(const BayesianAgent& agent, bool multimodal, const Grid& start,
                                          std::size_t steps, std::size_t burn_in, std::uint64_t seed) {
  const int n = agent.model().grid_size();
  if (start.size() != n) throw Error(ErrorKind::kSizeMismatch, "start grid does not match the model");
  require_exact(n);
  Rng rng(seed);
  GridDistribution hist{n, std::vector<double>(std::size_t{1} << (n * n), 0.0)};
  Grid x = start;
  for (std::size_t t = 0; t < burn_in + steps; ++t) {
    if (multimodal) {
      const int l = std::get<int>(agent.describe(x, rng).output);
      x = std::get<Grid>(agent.render(l, rng).output);
    } else {
      x = std::get<Grid>(agent.reproduce(x, rng).output);
    }
    if (t >= burn_in) hist.mass[x.state_index()] += 1.0;
  }
  for (auto& v : hist.mass) v /= static_cast<double>(steps);
  return hist;
}

}  // namespace srp
