#include "srp/analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "json.hpp"
#include "srp/error.hpp"
#include "srp/random.hpp"

namespace srp {

namespace {

std::vector<Grid> visual_boards(const ChainRecord& r, bool include_seed) {
  return include_seed ? r.boards() : r.produced_boards();
}

Error with_chain(const Error& e, const std::string& chain_id) {
  std::string msg = e.what();
  const std::string prefix = std::string(to_string(e.kind())) + ": ";
  if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
  return Error(e.kind(), "chain " + chain_id + ": " + msg);
}

}  // namespace

VelocitySeries chain_velocity(const ChainRecord& record, bool include_seed) {
  const auto boards = visual_boards(record, include_seed);
  if (boards.size() < 2) {
    throw Error(ErrorKind::kTooFewBoards, "chain " + record.chain_id + " has " + std::to_string(boards.size()) +
                                              " boards; velocity needs at least 2");
  }
  VelocitySeries v;
  v.chain_id = record.chain_id;
  for (std::size_t i = 1; i < boards.size(); ++i) v.distances.push_back(hamming(boards[i - 1], boards[i]));
  v.mean = std::accumulate(v.distances.begin(), v.distances.end(), 0.0) / static_cast<double>(v.distances.size());
  return v;
}

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::kKc: return "kc";
    case Metric::kEntropy: return "entropy";
    case Metric::kLsc: return "lsc";
  }
  return "?";
}

Metric parse_metric(std::string_view text) {
  if (text == "kc" || text == "bdm") return Metric::kKc;
  if (text == "entropy") return Metric::kEntropy;
  if (text == "lsc") return Metric::kLsc;
  throw Error(ErrorKind::kInvalidArgument, "unknown metric '" + std::string(text) + "' (kc|entropy|lsc)");
}

double board_metric(const Grid& g, Metric m, const CtmTable* ctm, BoundaryConvention convention) {
  switch (m) {
    case Metric::kEntropy: return shannon_entropy(g);
    case Metric::kLsc: return local_spatial_complexity(g);
    case Metric::kKc:
      if (ctm == nullptr) throw Error(ErrorKind::kInvalidArgument, "kc needs a CTM table");
      return bdm_kc(g, *ctm, convention);
  }
  return 0.0;
}

std::vector<ChainMean> mean_board_complexity(const std::vector<ChainRecord>& records, Metric metric,
                                             const CtmTable* ctm, BoundaryConvention convention, bool include_seed) {
  std::vector<ChainMean> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const auto boards = visual_boards(r, include_seed);
    if (boards.empty()) throw Error(ErrorKind::kTooFewBoards, "chain " + r.chain_id + " has no boards to average");
    ChainMean m{r.chain_id, 0.0, static_cast<int>(boards.size())};
    try {
      for (const auto& g : boards) m.mean += board_metric(g, metric, ctm, convention);
    } catch (const Error& e) {
      throw with_chain(e, r.chain_id);
    }
    m.mean /= static_cast<double>(boards.size());
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<BoardCount> board_frequencies(const std::vector<ChainRecord>& records, bool include_seed) {
  std::unordered_map<Grid, int, GridHash> counts;
  for (const auto& r : records) {
    for (const auto& g : visual_boards(r, include_seed)) ++counts[g];
  }
  std::vector<std::pair<std::string, BoardCount>> keyed;
  keyed.reserve(counts.size());
  for (auto& [g, c] : counts) keyed.push_back({serialize_grid(g), BoardCount{g, c}});
  std::sort(keyed.begin(), keyed.end(), [](const auto& x, const auto& y) {
    if (x.second.count != y.second.count) return x.second.count > y.second.count;
    return x.first < y.first;
  });
  std::vector<BoardCount> out;
  out.reserve(keyed.size());
  for (auto& k : keyed) out.push_back(std::move(k.second));
  return out;
}

// --- tests -----------------------------------------------------------------

namespace {

std::pair<double, double> mean_and_ss(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, ss};
}

double f_upper(double f, int df1, int df2) {
  if (f <= 0.0) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::fisher_f(df1, df2), f));
}

}  // namespace

TTestResult pooled_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw Error(ErrorKind::kInvalidArgument, "t-test needs at least 2 values per group");
  const auto [ma, ssa] = mean_and_ss(a);
  const auto [mb, ssb] = mean_and_ss(b);
  TTestResult r;
  r.mean_a = ma;
  r.mean_b = mb;
  r.df = static_cast<int>(a.size() + b.size()) - 2;
  const double pooled = (ssa + ssb) / r.df;
  if (!(pooled > 0.0)) throw Error(ErrorKind::kZeroPooledVariance, "both samples are constant");
  const double se = std::sqrt(pooled * (1.0 / static_cast<double>(a.size()) + 1.0 / static_cast<double>(b.size())));
  r.t = (ma - mb) / se;
  if (r.t == 0.0) {
    r.p = 1.0;
  } else {
    const boost::math::students_t dist(r.df);
    r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t))));
  }
  return r;
}

AnovaResult two_way_anova(const std::vector<double>& values, const std::vector<std::string>& factor_a,
                          const std::vector<std::string>& factor_b, const std::string& name_a,
                          const std::string& name_b) {
  if (values.size() != factor_a.size() || values.size() != factor_b.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "values and factor labels differ in length");
  }
  auto levels = [](const std::vector<std::string>& labels) {
    std::vector<std::string> seen;
    for (const auto& l : labels) {
      if (std::find(seen.begin(), seen.end(), l) == seen.end()) seen.push_back(l);
    }
    return seen;
  };
  const auto la = levels(factor_a);
  const auto lb = levels(factor_b);
  if (la.size() != 2 || lb.size() != 2) {
    throw Error(ErrorKind::kUnbalancedDesign, "need exactly two levels per factor, got " + std::to_string(la.size()) +
                                                  " and " + std::to_string(lb.size()));
  }
  std::vector<double> cells[2][2];
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto ia = factor_a[i] == la[0] ? 0 : 1;
    const auto ib = factor_b[i] == lb[0] ? 0 : 1;
    cells[ia][ib].push_back(values[i]);
  }
  const std::size_t r = cells[0][0].size();
  for (auto& row : cells) {
    for (auto& c : row) {
      if (c.size() != r) throw Error(ErrorKind::kUnbalancedDesign, "cell sizes differ");
    }
  }
  if (r < 2) throw Error(ErrorKind::kDegenerateVariance, "need at least 2 observations per cell");

  double m[2][2];
  double ss_error = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const auto [mean, ss] = mean_and_ss(cells[i][j]);
      m[i][j] = mean;
      ss_error += ss;
    }
  }
  const double grand = (m[0][0] + m[0][1] + m[1][0] + m[1][1]) / 4.0;
  const double rd = static_cast<double>(r);
  double ss_a = 0.0, ss_b = 0.0, ss_ab = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double mai = (m[i][0] + m[i][1]) / 2.0;
    const double mbi = (m[0][i] + m[1][i]) / 2.0;
    ss_a += 2.0 * rd * (mai - grand) * (mai - grand);
    ss_b += 2.0 * rd * (mbi - grand) * (mbi - grand);
  }
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double e = m[i][j] - (m[i][0] + m[i][1]) / 2.0 - (m[0][j] + m[1][j]) / 2.0 + grand;
      ss_ab += rd * e * e;
    }
  }

  AnovaResult res;
  res.df_error = static_cast<int>(values.size()) - 4;
  res.ss_error = ss_error;
  res.ss_total = mean_and_ss(values).second;
  if (!(ss_error > 0.0)) throw Error(ErrorKind::kDegenerateVariance, "zero within-cell variance");
  const double ms_error = ss_error / res.df_error;
  auto effect = [&](std::string name, double ss) {
    AnovaEffect e{std::move(name), ss, 1, ss / ms_error, 1.0};
    e.p = f_upper(e.f, 1, res.df_error);
    return e;
  };
  res.a = effect(name_a, ss_a);
  res.b = effect(name_b, ss_b);
  res.interaction = effect(name_a + " x " + name_b, ss_ab);
  return res;
}

// --- embeddings ------------------------------------------------------------

Eigen::MatrixXd Embeddings::matrix() const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(rows[i].data(), dim);
  }
  return x;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<std::string> word_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

HashedFeaturizer::HashedFeaturizer(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim < 1) throw Error(ErrorKind::kInvalidArgument, "embedding dimension must be positive");
}

std::string HashedFeaturizer::tag() const {
  std::ostringstream s;
  s << "offline:hashed-bigram-" << dim_ << "-s" << seed_;
  return s.str();
}

Embeddings HashedFeaturizer::embed(const std::vector<std::string>& texts) {
  Embeddings out{tag(), dim_, {}};
  out.rows.reserve(texts.size());
  for (const auto& text : texts) {
    const auto words = word_tokens(text);
    if (words.empty()) throw Error(ErrorKind::kInvalidArgument, "cannot embed an empty description");
    std::map<std::string, int> features;
    for (std::size_t i = 0; i < words.size(); ++i) {
      ++features["w:" + words[i]];
      if (i + 1 < words.size()) ++features["b:" + words[i] + " " + words[i + 1]];
    }
    std::vector<double> v(static_cast<std::size_t>(dim_), 0.0);
    for (const auto& [f, count] : features) {
      Rng rng(derive_seed(seed_, fnv1a(f)));
      // Box-Muller on our own uniforms keeps vectors identical across standard libraries.
      for (int d = 0; d < dim_; d += 2) {
        const double u1 = 1.0 - uniform01(rng);
        const double u2 = uniform01(rng);
        const double rad = std::sqrt(-2.0 * std::log(u1));
        v[static_cast<std::size_t>(d)] += count * rad * std::cos(2.0 * M_PI * u2);
        if (d + 1 < dim_) v[static_cast<std::size_t>(d + 1)] += count * rad * std::sin(2.0 * M_PI * u2);
      }
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    out.rows.push_back(std::move(v));
  }
  return out;
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(Config cfg)
    : cfg_(std::move(cfg)), url_(parse_url(cfg_.endpoint)), limiter_(cfg_.requests_per_second) {
  if (cfg_.model.empty()) throw Error(ErrorKind::kInvalidArgument, "embedding model must be set");
  if (cfg_.batch_size < 1) throw Error(ErrorKind::kInvalidArgument, "batch size must be positive");
}

Embeddings RemoteEmbeddingProvider::embed(const std::vector<std::string>& texts) {
  Embeddings out{tag(), cfg_.dim, {}};
  std::vector<std::pair<std::string, std::string>> headers;
  if (const char* tok = std::getenv(cfg_.token_env.c_str()); tok && *tok) {
    headers.emplace_back("Authorization", std::string("Bearer ") + tok);
  }
  for (std::size_t start = 0; start < texts.size(); start += static_cast<std::size_t>(cfg_.batch_size)) {
    const auto end = std::min(texts.size(), start + static_cast<std::size_t>(cfg_.batch_size));
    nlohmann::json body{{"model", cfg_.model},
                        {"input", std::vector<std::string>(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                                           texts.begin() + static_cast<std::ptrdiff_t>(end))}};
    limiter_.acquire();
    const auto res = http_post_json(url_, body.dump(), headers, cfg_.timeout_s);
    if (res.status != 200) throw Error(ErrorKind::kTransportError, "embeddings HTTP " + std::to_string(res.status));
    std::vector<std::vector<double>> batch(end - start);
    try {
      const auto j = nlohmann::json::parse(res.body);
      for (const auto& item : j.at("data")) {
        const auto idx = item.value("index", std::size_t{0});
        if (idx >= batch.size()) throw Error(ErrorKind::kParseError, "embedding index out of range");
        batch[idx] = item.at("embedding").get<std::vector<double>>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kTransportError, std::string("malformed embeddings body: ") + e.what());
    }
    for (auto& v : batch) {
      if (static_cast<int>(v.size()) != cfg_.dim) {
        throw Error(ErrorKind::kDimensionMismatch, "expected " + std::to_string(cfg_.dim) + "-dim embedding, got " +
                                                       std::to_string(v.size()));
      }
      if (!std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); })) {
        throw Error(ErrorKind::kParseError, "non-finite embedding value");
      }
      out.rows.push_back(std::move(v));
    }
  }
  return out;
}

Embeddings concat_embeddings(const Embeddings& a, const Embeddings& b) {
  if (a.provider != b.provider) {
    throw Error(ErrorKind::kDimensionMismatch, "cannot mix embedding providers " + a.provider + " and " + b.provider);
  }
  if (a.dim != b.dim) throw Error(ErrorKind::kDimensionMismatch, "embedding dimensions differ");
  Embeddings out = a;
  out.rows.insert(out.rows.end(), b.rows.begin(), b.rows.end());
  return out;
}

// --- decoding --------------------------------------------------------------

std::vector<DecodingSample> decoding_samples(const std::vector<ChainRecord>& records,
                                             const std::vector<Annotations>& annotations, Metric metric,
                                             const CtmTable* ctm, BoundaryConvention convention) {
  std::map<std::string, const Annotations*> by_chain;
  for (const auto& a : annotations) by_chain[a.chain_id] = &a;

  std::vector<DecodingSample> out;
  for (const auto& r : records) {
    std::map<int, const Grid*> boards{{0, &r.seed_grid}};
    for (const auto& s : r.steps) {
      if (s.is_board()) boards[s.index] = &std::get<Grid>(s.payload);
    }
    auto add = [&](int board_index, const Description& d) {
      const auto it = boards.find(board_index);
      if (it == boards.end()) return;
      try {
        out.push_back({r.chain_id, board_index, d.text, board_metric(*it->second, metric, ctm, convention)});
      } catch (const Error& e) {
        throw with_chain(e, r.chain_id);
      }
    };
    if (r.mode == ChainMode::kMultimodal) {
      for (const auto& s : r.steps) {
        if (!s.is_board()) add(s.index - 1, std::get<Description>(s.payload));
      }
    } else if (const auto it = by_chain.find(r.chain_id); it != by_chain.end()) {
      for (const auto& item : it->second->items) add(item.board_index, item.description);
    }
  }
  return out;
}

std::vector<double> default_lambda_grid() {
  std::vector<double> grid;
  for (int i = 0; i < 13; ++i) grid.push_back(std::pow(10.0, -3.0 + 0.5 * i));
  return grid;
}

double RidgeModel::predict(const Eigen::VectorXd& x) const {
  return intercept + ((x - mean).array() / scale.array()).matrix().dot(coef);
}

Eigen::VectorXd RidgeModel::predict(const Eigen::MatrixXd& x) const {
  const Eigen::MatrixXd z = (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  return (z * coef).array() + intercept;
}

namespace {

// Ridge solutions for several lambdas from one eigendecomposition of the
// smaller Gram matrix.
class RidgePath {
 public:
  RidgePath(const Eigen::MatrixXd& z, const Eigen::VectorXd& yc) : z_(z) {
    primal_ = z.rows() >= z.cols();
    const Eigen::MatrixXd gram = primal_ ? Eigen::MatrixXd(z.transpose() * z) : Eigen::MatrixXd(z * z.transpose());
    eig_.compute(gram);
    proj_ = eig_.eigenvectors().transpose() * (primal_ ? Eigen::VectorXd(z.transpose() * yc) : yc);
  }

  Eigen::VectorXd coef(double lambda) const {
    const Eigen::VectorXd shrunk =
        (proj_.array() / (eig_.eigenvalues().array().max(0.0) + lambda)).matrix();
    const Eigen::VectorXd w = eig_.eigenvectors() * shrunk;
    return primal_ ? w : Eigen::VectorXd(z_.transpose() * w);
  }

 private:
  const Eigen::MatrixXd& z_;
  bool primal_ = true;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_;
  Eigen::VectorXd proj_;
};

struct Standardized {
  Eigen::MatrixXd z;
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
  Eigen::VectorXd yc;
  double y_mean = 0.0;
};

Standardized standardize(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, bool enabled) {
  Standardized s;
  const auto d = x.cols();
  if (enabled) {
    s.mean = x.colwise().mean().transpose();
    const Eigen::MatrixXd centred = x.rowwise() - s.mean.transpose();
    s.scale = (centred.colwise().squaredNorm() / static_cast<double>(x.rows())).cwiseSqrt().transpose();
    for (Eigen::Index j = 0; j < d; ++j) {
      if (!(s.scale(j) > 1e-12)) s.scale(j) = 1.0;
    }
    s.z = centred.array().rowwise() / s.scale.transpose().array();
    s.y_mean = y.mean();
  } else {
    s.mean = Eigen::VectorXd::Zero(d);
    s.scale = Eigen::VectorXd::Ones(d);
    s.z = x;
  }
  s.yc = y.array() - s.y_mean;
  return s;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
  return out;
}

Eigen::VectorXd take(const Eigen::VectorXd& y, const std::vector<Eigen::Index>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = y(idx[i]);
  return out;
}

std::vector<int> assign_folds(const std::vector<std::size_t>& members, int k, Rng& rng,
                              const std::vector<std::string>* groups) {
  std::vector<int> fold(members.size());
  if (groups == nullptr) {
    std::vector<std::size_t> order(members.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t pos = 0; pos < order.size(); ++pos) fold[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
    return fold;
  }
  std::vector<std::string> names;
  std::map<std::string, std::size_t> seen;
  for (auto m : members) {
    if (seen.emplace((*groups)[m], names.size()).second) names.push_back((*groups)[m]);
  }
  if (names.size() < static_cast<std::size_t>(k)) {
    throw Error(ErrorKind::kInvalidArgument, "grouped folds need at least " + std::to_string(k) + " groups, got " +
                                                 std::to_string(names.size()));
  }
  std::vector<std::size_t> order(names.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> group_fold(names.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) group_fold[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < members.size(); ++i) fold[i] = group_fold[seen[(*groups)[members[i]]]];
  return fold;
}

}  // namespace

RidgeModel fit_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda, bool standardize_features) {
  if (x.rows() != y.size()) throw Error(ErrorKind::kDimensionMismatch, "X and y differ in length");
  if (!(lambda >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "lambda must be >= 0");
  const auto s = standardize(x, y, standardize_features);
  RidgeModel m;
  m.mean = s.mean;
  m.scale = s.scale;
  m.intercept = s.y_mean;
  m.lambda = lambda;
  const Eigen::MatrixXd a = s.z.transpose() * s.z + lambda * Eigen::MatrixXd::Identity(x.cols(), x.cols());
  m.coef = a.ldlt().solve(s.z.transpose() * s.yc);
  return m;
}

double r_squared(const Eigen::VectorXd& y, const Eigen::VectorXd& predicted) {
  const double ss_tot = (y.array() - y.mean()).square().sum();
  const double ss_res = (y - predicted).squaredNorm();
  if (!(ss_tot > 0.0)) throw Error(ErrorKind::kConstantTarget, "held-out targets are constant");
  return 1.0 - ss_res / ss_tot;
}

FoldPlan make_fold_plan(std::size_t n, int k, std::uint64_t seed, const std::vector<std::string>* groups) {
  if (k < 2) throw Error(ErrorKind::kInvalidArgument, "need at least 2 folds");
  if (groups && groups->size() != n) throw Error(ErrorKind::kDimensionMismatch, "groups differ in length from samples");
  FoldPlan plan;
  plan.k = k;
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  Rng outer_rng(derive_seed(seed, 0));
  plan.outer = assign_folds(all, k, outer_rng, groups);
  for (int f = 0; f < k; ++f) {
    std::vector<std::size_t> train;
    for (std::size_t i = 0; i < n; ++i) {
      if (plan.outer[i] != f) train.push_back(i);
    }
    Rng inner_rng(derive_seed(seed, static_cast<std::uint64_t>(f) + 1));
    const auto inner_train = assign_folds(train, k, inner_rng, groups);
    std::vector<int> inner(n, -1);
    for (std::size_t i = 0; i < train.size(); ++i) inner[train[i]] = inner_train[i];
    plan.inner.push_back(std::move(inner));
  }
  return plan;
}

std::vector<std::string> check_leakage(const FoldPlan& plan, const Eigen::MatrixXd& x) {
  std::vector<std::string> issues;
  const auto n = plan.outer.size();
  if (static_cast<std::size_t>(x.rows()) != n) {
    issues.push_back("fold plan covers " + std::to_string(n) + " samples but X has " + std::to_string(x.rows()));
    return issues;
  }
  if (plan.inner.size() != static_cast<std::size_t>(plan.k)) issues.push_back("inner plan count differs from k");
  for (std::size_t i = 0; i < n; ++i) {
    if (plan.outer[i] < 0 || plan.outer[i] >= plan.k) issues.push_back("sample " + std::to_string(i) + " has no outer fold");
  }
  for (std::size_t f = 0; f < plan.inner.size(); ++f) {
    const auto& inner = plan.inner[f];
    for (std::size_t i = 0; i < n && i < inner.size(); ++i) {
      const bool test = plan.outer[i] == static_cast<int>(f);
      if (test && inner[i] != -1) {
        issues.push_back("outer fold " + std::to_string(f) + ": test sample " + std::to_string(i) + " used in inner CV");
      }
      if (!test && (inner[i] < 0 || inner[i] >= plan.k)) {
        issues.push_back("outer fold " + std::to_string(f) + ": training sample " + std::to_string(i) +
                         " missing from inner CV");
      }
    }
  }

  auto row_key = [&](Eigen::Index i) {
    const Eigen::RowVectorXd r = x.row(i);
    return std::string(reinterpret_cast<const char*>(r.data()), static_cast<std::size_t>(r.size()) * sizeof(double));
  };
  std::unordered_multimap<std::string, std::size_t> rows;
  for (std::size_t i = 0; i < n; ++i) rows.emplace(row_key(static_cast<Eigen::Index>(i)), i);
  for (std::size_t i = 0; i < n; ++i) {
    const auto [lo, hi] = rows.equal_range(row_key(static_cast<Eigen::Index>(i)));
    for (auto it = lo; it != hi; ++it) {
      const auto j = it->second;
      if (j != i && plan.outer[j] != plan.outer[i]) {
        issues.push_back("outer fold " + std::to_string(plan.outer[i]) + ": test sample " + std::to_string(i) +
                         " duplicates training sample " + std::to_string(j));
      }
    }
  }
  return issues;
}

DecodingResult ridge_decode(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const DecodingOptions& opts,
                            const std::vector<std::string>* groups) {
  if (x.rows() != y.size()) throw Error(ErrorKind::kDimensionMismatch, "X and y differ in length");
  if (x.rows() < 25) throw Error(ErrorKind::kInvalidArgument, "decoding needs at least 25 samples");
  if (opts.lambdas.empty()) throw Error(ErrorKind::kInvalidArgument, "empty lambda grid");
  if (!((y.array() - y.mean()).square().sum() > 0.0)) throw Error(ErrorKind::kConstantTarget, "targets are constant");
  if (opts.grouped && groups == nullptr) throw Error(ErrorKind::kInvalidArgument, "grouped folds need chain groups");

  DecodingResult res;
  res.plan = make_fold_plan(static_cast<std::size_t>(x.rows()), opts.folds, opts.seed, opts.grouped ? groups : nullptr);
  const auto n = static_cast<std::size_t>(x.rows());

  for (int f = 0; f < opts.folds; ++f) {
    std::vector<Eigen::Index> train, test;
    for (std::size_t i = 0; i < n; ++i) (res.plan.outer[i] == f ? test : train).push_back(static_cast<Eigen::Index>(i));

    // Inner CV: pooled squared error per lambda.
    std::vector<double> sse(opts.lambdas.size(), 0.0);
    for (int g = 0; g < opts.folds; ++g) {
      std::vector<Eigen::Index> itrain, ival;
      for (auto i : train) (res.plan.inner[static_cast<std::size_t>(f)][static_cast<std::size_t>(i)] == g ? ival : itrain).push_back(i);
      if (ival.empty() || itrain.empty()) continue;
      const auto s = standardize(take_rows(x, itrain), take(y, itrain), true);
      const Eigen::MatrixXd zval = (take_rows(x, ival).rowwise() - s.mean.transpose()).array().rowwise() /
                                   s.scale.transpose().array();
      const Eigen::VectorXd yval = take(y, ival);
      const RidgePath path(s.z, s.yc);
      for (std::size_t l = 0; l < opts.lambdas.size(); ++l) {
        const Eigen::VectorXd pred = (zval * path.coef(opts.lambdas[l])).array() + s.y_mean;
        sse[l] += (yval - pred).squaredNorm();
      }
    }
    const auto best = static_cast<std::size_t>(std::min_element(sse.begin(), sse.end()) - sse.begin());
    const double lambda = opts.lambdas[best];

    const auto s = standardize(take_rows(x, train), take(y, train), true);
    const RidgePath path(s.z, s.yc);
    RidgeModel m{s.mean, s.scale, path.coef(lambda), s.y_mean, lambda};
    const Eigen::VectorXd ytest = take(y, test);
    double r2 = 0.0;
    try {
      r2 = r_squared(ytest, m.predict(take_rows(x, test)));
    } catch (const Error&) {
      throw Error(ErrorKind::kConstantTarget, "outer fold " + std::to_string(f) + " has constant held-out targets");
    }
    res.fold_r2.push_back(r2);
    res.chosen_lambda.push_back(lambda);
  }
  res.mean_r2 = std::accumulate(res.fold_r2.begin(), res.fold_r2.end(), 0.0) / static_cast<double>(res.fold_r2.size());
  return res;
}

// --- reports ---------------------------------------------------------------

std::string format_p(double p) {
  if (p < 1e-4) return "< 0.0001";
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << p;
  return s.str();
}

void write_anova_table(std::ostream& out, const std::vector<AnovaRow>& rows) {
  auto line = [&](const std::string& measure, const std::string& effect, const std::string& f, const std::string& p) {
    out << std::left << std::setw(10) << measure << std::setw(26) << effect << std::setw(24) << f << p << '\n';
  };
  line("Measure", "Effect", "F", "p");
  for (const auto& row : rows) {
    bool first = true;
    for (const auto* e : {&row.result.a, &row.result.b, &row.result.interaction}) {
      std::ostringstream f;
      f << "F(" << e->df << "," << row.result.df_error << ") = " << std::fixed << std::setprecision(3) << e->f;
      line(first ? row.measure : "", e->name, f.str(), format_p(e->p));
      first = false;
    }
  }
}

void write_chain_metrics_csv(std::ostream& out, const std::vector<ChainRecord>& records, const CtmTable* ctm,
                             BoundaryConvention convention) {
  out << "chain_id,mode,status,boards,mean_kc,mean_entropy,mean_lsc,velocity\n";
  for (const auto& r : records) {
    const auto boards = r.produced_boards();
    out << r.chain_id << ',' << to_string(r.mode) << ',' << to_string(r.status) << ',' << boards.size();
    auto cell = [&](std::optional<double> v) {
      out << ',';
      if (v) {
        out << std::setprecision(10) << *v;
      } else {
        out << "NA";
      }
    };
    auto mean_of = [&](Metric m) -> std::optional<double> {
      if (boards.empty() || (m == Metric::kKc && ctm == nullptr)) return std::nullopt;
      return mean_board_complexity({r}, m, ctm, convention).front().mean;
    };
    cell(mean_of(Metric::kKc));
    cell(mean_of(Metric::kEntropy));
    cell(mean_of(Metric::kLsc));
    cell(r.boards().size() >= 2 ? std::optional<double>(chain_velocity(r).mean) : std::nullopt);
    out << '\n';
  }
}

void write_velocity_csv(std::ostream& out, const std::vector<VelocitySeries>& series) {
  out << "chain_id,step,distance\n";
  for (const auto& v : series) {
    for (std::size_t i = 0; i < v.distances.size(); ++i) out << v.chain_id << ',' << i + 1 << ',' << v.distances[i] << '\n';
  }
}

}  // namespace srp

namespace srp {

ChainStore load_chain_store(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return import_chains(path);
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::kIoError, "no such dataset: " + path.string());
  return replay_chain_events(EventLog::read(path));
}

namespace {

std::vector<ChainRecord> of_mode(const ChainStore& store, ChainMode mode) {
  std::vector<ChainRecord> out;
  for (const auto& c : store.chains) {
    if (c.mode == mode && c.status == ChainStatus::kComplete) out.push_back(c);
  }
  return out;
}

std::vector<double> means_of(const std::vector<ChainMean>& v) {
  std::vector<double> out;
  for (const auto& m : v) out.push_back(m.mean);
  return out;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

}  // namespace

void write_analysis_report(std::ostream& out, const std::vector<LabeledStore>& groups, const ReportOptions& opts) {
  std::vector<Metric> metrics;
  if (opts.ctm) metrics.push_back(Metric::kKc);
  metrics.push_back(Metric::kEntropy);
  metrics.push_back(Metric::kLsc);
  auto metric_name = [](Metric m) -> std::string {
    switch (m) {
      case Metric::kKc: return "KC";
      case Metric::kEntropy: return "Entropy";
      case Metric::kLsc: return "LSC";
    }
    return "?";
  };

  out << "== Conditions ==\n";
  if (opts.ctm) out << "ctm: " << opts.ctm->provenance_tag() << " (" << to_string(opts.convention) << ")\n";
  out << std::left << std::setw(16) << "label" << std::setw(12) << "mode" << std::setw(8) << "chains" << std::setw(10)
      << "velocity";
  for (auto m : metrics) out << std::setw(10) << metric_name(m);
  out << '\n';
  for (const auto& g : groups) {
    for (auto mode : {ChainMode::kUnimodal, ChainMode::kMultimodal}) {
      const auto recs = of_mode(g.store, mode);
      if (recs.empty()) continue;
      double vel = 0.0;
      for (const auto& r : recs) vel += chain_velocity(r, opts.velocity_includes_seed).mean;
      out << std::setw(16) << g.label << std::setw(12) << to_string(mode) << std::setw(8) << recs.size()
          << std::setw(10) << fmt(vel / static_cast<double>(recs.size()), 3);
      for (auto m : metrics) {
        const auto means = means_of(mean_board_complexity(recs, m, opts.ctm, opts.convention));
        out << std::setw(10) << fmt(std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(means.size()));
      }
      out << '\n';
    }
  }

  out << "\n== Unimodal vs multimodal (pooled t-test on chain means) ==\n";
  for (const auto& g : groups) {
    const auto uni = of_mode(g.store, ChainMode::kUnimodal);
    const auto multi = of_mode(g.store, ChainMode::kMultimodal);
    if (uni.size() < 2 || multi.size() < 2) {
      out << g.label << ": needs at least 2 complete chains per mode\n";
      continue;
    }
    for (auto m : metrics) {
      try {
        const auto t = pooled_t_test(means_of(mean_board_complexity(uni, m, opts.ctm, opts.convention)),
                                     means_of(mean_board_complexity(multi, m, opts.ctm, opts.convention)));
        out << std::setw(16) << g.label << std::setw(10) << metric_name(m) << "t(" << t.df << ") = " << fmt(t.t, 3)
            << ", p " << (t.p < 1e-4 ? "" : "= ") << format_p(t.p) << '\n';
      } catch (const Error& e) {
        out << std::setw(16) << g.label << std::setw(10) << metric_name(m) << e.what() << '\n';
      }
    }
  }

  if (groups.size() == 2) {
    out << "\n== Two-way ANOVA: " << groups[0].label << "/" << groups[1].label << " x modality ==\n";
    std::vector<AnovaRow> rows;
    std::string problem;
    for (auto m : metrics) {
      std::vector<double> values;
      std::vector<std::string> fa, fb;
      for (const auto& g : groups) {
        for (auto mode : {ChainMode::kUnimodal, ChainMode::kMultimodal}) {
          const auto recs = of_mode(g.store, mode);
          if (recs.empty()) continue;
          for (double v : means_of(mean_board_complexity(recs, m, opts.ctm, opts.convention))) {
            values.push_back(v);
            fa.push_back(g.label);
            fb.push_back(std::string(to_string(mode)));
          }
        }
      }
      try {
        rows.push_back({metric_name(m), two_way_anova(values, fa, fb, "Subject", "Modality")});
      } catch (const Error& e) {
        problem = e.what();
        break;
      }
    }
    if (problem.empty()) {
      write_anova_table(out, rows);
    } else {
      out << "not computed: " << problem << '\n';
    }
  }

  out << "\n== Most frequent boards ==\n";
  for (const auto& g : groups) {
    for (auto mode : {ChainMode::kUnimodal, ChainMode::kMultimodal}) {
      const auto recs = of_mode(g.store, mode);
      if (recs.empty()) continue;
      const auto freq = board_frequencies(recs);
      int total = 0;
      for (const auto& f : freq) total += f.count;
      out << g.label << " " << to_string(mode) << " (" << total << " boards, " << freq.size() << " distinct)\n";
      for (int i = 0; i < opts.top_boards && i < static_cast<int>(freq.size()); ++i) {
        out << "  #" << i + 1 << " count " << freq[static_cast<std::size_t>(i)].count << "\n";
        std::istringstream rows(serialize_grid(freq[static_cast<std::size_t>(i)].grid));
        for (std::string line; std::getline(rows, line);) out << "    " << line << '\n';
      }
    }
  }

  if (!opts.decode) return;
  out << "\n== Decoding complexity from descriptions (ridge, nested 5-fold, grouped by chain) ==\n";
  HashedFeaturizer featurizer;
  out << "embeddings: " << featurizer.tag() << '\n';
  for (const auto& g : groups) {
    for (auto m : metrics) {
      const auto samples = decoding_samples(g.store.chains, g.store.annotations, m, opts.ctm, opts.convention);
      out << std::setw(16) << g.label << std::setw(10) << metric_name(m);
      std::vector<std::string> texts, chains;
      Eigen::VectorXd y(static_cast<Eigen::Index>(samples.size()));
      for (std::size_t i = 0; i < samples.size(); ++i) {
        texts.push_back(samples[i].text);
        chains.push_back(samples[i].chain_id);
        y(static_cast<Eigen::Index>(i)) = samples[i].target;
      }
      try {
        if (samples.size() < 25) throw Error(ErrorKind::kInvalidArgument, "decoding needs at least 25 samples");
        DecodingOptions dopts;
        dopts.seed = opts.seed;
        const auto res = ridge_decode(featurizer.embed(texts).matrix(), y, dopts, &chains);
        out << "n = " << samples.size() << ", mean R2 = " << fmt(res.mean_r2) << ", folds:";
        for (double r : res.fold_r2) out << ' ' << fmt(r);
        out << '\n';
      } catch (const Error& e) {
        out << "n = " << samples.size() << ", not computed: " << e.what() << '\n';
      }
    }
  }
}

}  // namespace srp
