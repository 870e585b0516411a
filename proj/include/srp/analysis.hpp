#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "srp/chain.hpp"
#include "srp/complexity.hpp"
#include "srp/ctm.hpp"
#include "srp/http.hpp"

namespace srp {

// --- chain dynamics --------------------------------------------------------

struct VelocitySeries {
  std::string chain_id;
  std::vector<int> distances;  // hamming distance per consecutive board pair
  double mean = 0.0;
};

// Distances between consecutive visual boards (descriptions skipped). With
// include_seed the seed -> first board transition is counted.
VelocitySeries chain_velocity(const ChainRecord& record, bool include_seed = true);

enum class Metric { kKc, kEntropy, kLsc };
std::string_view to_string(Metric m);
Metric parse_metric(std::string_view text);

double board_metric(const Grid& g, Metric m, const CtmTable* ctm,
                    BoundaryConvention convention = BoundaryConvention::kMaximalBlocks);

struct ChainMean {
  std::string chain_id;
  double mean = 0.0;
  int boards = 0;
};

// Per-chain mean of a metric over produced boards (seed excluded unless
// include_seed). `ctm` is only needed for Metric::kKc.
std::vector<ChainMean> mean_board_complexity(const std::vector<ChainRecord>& records, Metric metric,
                                             const CtmTable* ctm = nullptr,
                                             BoundaryConvention convention = BoundaryConvention::kMaximalBlocks,
                                             bool include_seed = false);

struct BoardCount {
  Grid grid;
  int count = 0;
};

// Exact-equality tally, most frequent first; ties in grid-text order.
std::vector<BoardCount> board_frequencies(const std::vector<ChainRecord>& records, bool include_seed = false);

// --- tests -----------------------------------------------------------------

struct TTestResult {
  double t = 0.0;
  int df = 0;
  double p = 1.0;
  double mean_a = 0.0;
  double mean_b = 0.0;
};

// Pooled-variance two-sample t-test, two-sided.
TTestResult pooled_t_test(const std::vector<double>& a, const std::vector<double>& b);

struct AnovaEffect {
  std::string name;
  double ss = 0.0;
  int df = 0;
  double f = 0.0;
  double p = 1.0;
};

struct AnovaResult {
  AnovaEffect a;
  AnovaEffect b;
  AnovaEffect interaction;
  double ss_error = 0.0;
  int df_error = 0;
  double ss_total = 0.0;
};

// Balanced two-way ANOVA for two factors with two levels each. Level names
// are taken in order of first appearance.
AnovaResult two_way_anova(const std::vector<double>& values, const std::vector<std::string>& factor_a,
                          const std::vector<std::string>& factor_b, const std::string& name_a = "A",
                          const std::string& name_b = "B");

// --- embeddings ------------------------------------------------------------

inline constexpr int kEmbeddingDim = 768;

struct Embeddings {
  std::string provider;
  int dim = 0;
  std::vector<std::vector<double>> rows;

  Eigen::MatrixXd matrix() const;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string tag() const = 0;
  virtual int dim() const = 0;
  virtual Embeddings embed(const std::vector<std::string>& texts) = 0;
};

// Hashed lower-cased word unigrams and bigrams, projected to `dim` through a
// fixed Gaussian projection drawn from `seed`, then L2-normalized.
class HashedFeaturizer : public EmbeddingProvider {
 public:
  explicit HashedFeaturizer(int dim = kEmbeddingDim, std::uint64_t seed = 0x5eed);
  std::string tag() const override;
  int dim() const override { return dim_; }
  Embeddings embed(const std::vector<std::string>& texts) override;

 private:
  int dim_;
  std::uint64_t seed_;
};

// Embeddings-style endpoint: POST {"model", "input": [...]} and read
// data[i].embedding. Requests are batched and rate limited.
class RemoteEmbeddingProvider : public EmbeddingProvider {
 public:
  struct Config {
    std::string endpoint = "https://api.openai.com/v1/embeddings";
    std::string model;
    std::string token_env = "OPENAI_API_KEY";
    int dim = kEmbeddingDim;
    int batch_size = 64;
    double timeout_s = 60.0;
    double requests_per_second = 0.0;
  };
  explicit RemoteEmbeddingProvider(Config cfg);
  std::string tag() const override { return "remote:" + cfg_.model; }
  int dim() const override { return cfg_.dim; }
  Embeddings embed(const std::vector<std::string>& texts) override;

 private:
  Config cfg_;
  Url url_;
  RateLimiter limiter_;
};

// Rejects mixing providers or dimensions.
Embeddings concat_embeddings(const Embeddings& a, const Embeddings& b);

// --- decoding --------------------------------------------------------------

struct DecodingSample {
  std::string chain_id;
  int board_index = 0;  // half-step index of the described board
  std::string text;
  double target = 0.0;
};

// Pairs each description with the board its author saw: multimodal
// descriptions at 2t+1 describe board 2t; unimodal boards use post-hoc
// annotations.
std::vector<DecodingSample> decoding_samples(const std::vector<ChainRecord>& records,
                                             const std::vector<Annotations>& annotations, Metric metric,
                                             const CtmTable* ctm = nullptr,
                                             BoundaryConvention convention = BoundaryConvention::kMaximalBlocks);

std::vector<double> default_lambda_grid();  // 13 values, 1e-3 .. 1e3

struct RidgeModel {
  Eigen::VectorXd mean;   // feature means of the training split
  Eigen::VectorXd scale;  // feature sds (1 where constant)
  Eigen::VectorXd coef;   // on standardized features
  double intercept = 0.0;
  double lambda = 0.0;

  double predict(const Eigen::VectorXd& x) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
};

// Closed-form ridge on standardized features with an unpenalized intercept.
// standardize=false solves the raw normal equation (X'X + lambda I) b = X'y
// with no centering and no intercept.
RidgeModel fit_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda, bool standardize = true);

double r_squared(const Eigen::VectorXd& y, const Eigen::VectorXd& predicted);

struct FoldPlan {
  int k = 5;
  std::vector<int> outer;               // outer fold of each sample
  std::vector<std::vector<int>> inner;  // per outer fold: inner fold of each sample, -1 for its test samples
};

// Seeded fold assignment. With groups, all samples of a group share a fold.
FoldPlan make_fold_plan(std::size_t n, int k, std::uint64_t seed, const std::vector<std::string>* groups = nullptr);

// Lists structural violations (a sample in two roles, inner folds touching
// the outer test fold) and content leaks: a test row whose features exactly
// duplicate a training row of the same outer split.
std::vector<std::string> check_leakage(const FoldPlan& plan, const Eigen::MatrixXd& x);

struct DecodingOptions {
  int folds = 5;
  std::vector<double> lambdas = default_lambda_grid();
  std::uint64_t seed = 0;
  bool grouped = true;  // needs groups
};

struct DecodingResult {
  std::vector<double> fold_r2;
  double mean_r2 = 0.0;
  std::vector<double> chosen_lambda;
  FoldPlan plan;
};

DecodingResult ridge_decode(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const DecodingOptions& opts = {},
                            const std::vector<std::string>* groups = nullptr);

// --- reports ---------------------------------------------------------------

struct AnovaRow {
  std::string measure;
  AnovaResult result;
};

// Fixed-width table: measure, effect, F(df1, df2), p.
void write_anova_table(std::ostream& out, const std::vector<AnovaRow>& rows);
void write_chain_metrics_csv(std::ostream& out, const std::vector<ChainRecord>& records, const CtmTable* ctm,
                             BoundaryConvention convention = BoundaryConvention::kMaximalBlocks);
void write_velocity_csv(std::ostream& out, const std::vector<VelocitySeries>& series);
std::string format_p(double p);

// A chain log (.jsonl) or an export directory.
ChainStore load_chain_store(const std::filesystem::path& path);

struct LabeledStore {
  std::string label;  // e.g. the agent population that produced the chains
  ChainStore store;
};

struct ReportOptions {
  const CtmTable* ctm = nullptr;  // kc columns are skipped without one
  BoundaryConvention convention = BoundaryConvention::kMaximalBlocks;
  bool velocity_includes_seed = true;
  int top_boards = 5;
  bool decode = true;  // offline featurizer, grouped folds
  std::uint64_t seed = 0;
};

// Condition summary, unimodal-vs-multimodal t-tests per label, a label x
// modality ANOVA table when exactly two labels are given, frequent boards and
// decoding scores. Output depends only on the inputs.
void write_analysis_report(std::ostream& out, const std::vector<LabeledStore>& groups, const ReportOptions& opts);

}  // namespace srp
