#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "viclevr/dataset.hpp"
#include "viclevr/scene.hpp"
#include "viclevr/tensor.hpp"
#include "viclevr/text.hpp"

namespace viclevr::phovit {

using tensor::ParamStore;
using tensor::Tensor;
using Var = tensor::Var<double>;
using Tape = tensor::Tape<double>;

struct PhoVitConfig {
  std::size_t d = 16;  // question feature width
  std::size_t max_len = 44;
  std::size_t image_h = 16;
  std::size_t image_w = 16;
  std::size_t channels = 3;
  std::size_t patch = 4;
  std::size_t latent = 16;  // ViT width D
  std::size_t n_vit_layers = 1;
  std::size_t K = 2;  // co-attention depth
  std::size_t n_heads = 2;
  std::size_t n_reduce_layers = 1;
  std::size_t df = 32;          // fused width
  std::size_t ffn_hidden = 32;  // hidden width of the transformer FFN blocks
  std::size_t n_answers = 8;
  std::uint64_t seed = 0;
  double init_sigma = 0.02;
  double ln_eps = 1e-5;

  std::size_t n_patches() const { return (image_h / patch) * (image_w / patch); }
  /// Throws std::invalid_argument when the divisibility invariants fail.
  void check() const;

  static PhoVitConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Token vocabulary of the question look-up table. The matrix itself lives in
/// the model parameters as "embed.table".
class EmbeddingTable {
 public:
  static constexpr const char* kUnk = "<unk>";

  /// "<unk>" at row 0 followed by the distinct tokens in sorted order, rows
  /// drawn from Normal(0, sigma).
  static EmbeddingTable random(const std::vector<std::string>& tokens, std::size_t d,
                               SplitMix64& rng, double sigma);
  /// word2vec text format; an optional "count width" header line is skipped.
  /// Rows must all have `d` values. "<unk>" is appended as a zero row if absent.
  static EmbeddingTable load_word2vec(const std::filesystem::path& path, std::size_t d);

  std::size_t index(const std::string& token) const;
  std::size_t unk_index() const { return unk_; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const Tensor& matrix() const { return matrix_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> index_;
  Tensor matrix_;
  std::size_t unk_ = 0;
};

class AnswerVocab {
 public:
  AnswerVocab() = default;
  explicit AnswerVocab(std::vector<std::string> answers);

  const std::vector<std::string>& answers() const { return answers_; }
  std::size_t size() const { return answers_.size(); }
  /// Index of the normalized answer, nullopt outside the vocabulary.
  std::optional<std::size_t> index(const std::string& answer) const;

 private:
  std::vector<std::string> answers_;
  std::map<std::string, std::size_t> index_;
};

/// Top-n normalized answers by frequency, ties lexicographic. When fewer than n
/// distinct answers exist all are returned and `warning` (if given) is set.
AnswerVocab build_answer_vocab(const std::vector<std::string>& answers, std::size_t n,
                               std::string* warning = nullptr);
/// Uses the questions of the train split only. Throws std::invalid_argument when it is empty.
AnswerVocab build_answer_vocab(const Dataset& d, std::size_t n, std::string* warning = nullptr);

/// Table rows for the first max_len tokens; an empty question yields one unk row.
std::vector<std::size_t> question_indices(const TokenSeq& tokens, const EmbeddingTable& table,
                                          const PhoVitConfig& cfg);
Tensor embed_question(const TokenSeq& tokens, const EmbeddingTable& table, const Tensor& matrix,
                      const PhoVitConfig& cfg);

/// N x (P²·C) patches in row-major patch order, pixels row-major, channels interleaved.
Tensor patchify(const RasterImage& img, std::size_t P);

struct PhoVitModel {
  PhoVitConfig cfg;
  EmbeddingTable table;
  AnswerVocab answers;
  ParamStore params;

  /// Registers every parameter, seeded by cfg.seed. cfg.n_answers is set from `answers`.
  static PhoVitModel init(PhoVitConfig cfg, EmbeddingTable table, AnswerVocab answers);
};

/// Parameter names resolved against one tape.
class Graph {
 public:
  Graph(Tape& tape, PhoVitModel& model);
  Var p(const std::string& name) const { return bind_[name]; }
  Tape& tape() const { return *tape_; }
  const PhoVitConfig& cfg() const { return model_->cfg; }
  const PhoVitModel& model() const { return *model_; }
  void collect_grads() const { bind_.collect_grads(); }

 private:
  Tape* tape_;
  PhoVitModel* model_;
  tensor::Binding bind_;
};

/// Multi-head attention of `queries` over `keys_values` using `<prefix>.w{q,k,v,o}`/`.b*`.
Var multi_head_attention(const Graph& g, const std::string& prefix, const Var& queries,
                         const Var& keys_values);

/// (N+1) x d: patch projection, class token, positions, ViT blocks, adapter.
Var vit_encode(const Graph& g, const Var& patches);

/// One deep-attention layer with the weights of layer `k`.
std::pair<Var, Var> da_layer(const Graph& g, std::size_t k, const Var& Q, const Var& I);

/// cfg.K deep-attention layers, the output of layer k feeding layer k+1.
std::pair<Var, Var> stacked_coattention(const Graph& g, const Var& Q0, const Var& I0);

/// 1 x d weighted sum of the rows of X with α = softmax of the learned row scores
/// of the MSA stack `reduce.<stream>`. Writes α (1 x t) to `alpha` when given.
Var attentional_reduce(const Graph& g, const std::string& stream, const Var& X,
                       Var* alpha = nullptr);

/// 1 x n_answers sigmoid scores. Writes pre-sigmoid logits to `logits` when given.
Var fuse_classify(const Graph& g, const Var& Qf, const Var& If, Var* logits = nullptr);

struct Trace {
  Var question;  // n x d
  Var image;     // (N+1) x d
  Var q_attended;
  Var i_attended;
  Var alpha_q;
  Var alpha_i;
  Var logits;
  Var probs;
};

/// Full pipeline on one tape.
Trace forward_graph(const Graph& g, const RasterImage& img, const std::string& question);

struct ForwardResult {
  Tensor probs;  // 1 x n_answers
  Tensor logits;
  std::size_t answer_index = 0;  // argmax, ties to the lowest index
  std::string answer;
};

ForwardResult forward(const RasterImage& img, const std::string& question, PhoVitModel& model);

struct Sample {
  RasterImage image;
  std::string question;
  std::size_t answer_index = 0;
};

/// One-hot BCE (summed) for one sample, recorded on `g`'s tape.
Var sample_loss(const Graph& g, const Sample& s);

/// Forward, BCE over the batch (per-question sums, then summed or averaged over
/// questions), backward, then value -= lr * grad for every parameter that is
/// not frozen. Returns the pre-update loss. Throws std::runtime_error on a
/// non-finite loss.
double train_step(const std::vector<Sample>& batch, PhoVitModel& model, double lr,
                  tensor::BceReduction reduction = tensor::BceReduction::mean_per_question);

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  std::set<std::string> frozen;            // parameter names excluded from the check
  std::optional<std::string> fault_op;     // corrupts this op's backward rule (tests)
  double fault_scale = 1.5;
};

struct GradCheckReport {
  std::map<std::string, double> group_error;      // group -> max relative error
  std::map<std::string, double> parameter_error;  // parameter -> max relative error
  std::vector<std::string> notices;
  std::size_t checked_scalars = 0;
  double tol = 1e-4;

  bool passed() const;
  /// {group: max_rel_error}.
  nlohmann::json to_json() const;
};

/// Parameter group of a name: everything before the last '.'.
std::string parameter_group(const std::string& name);

/// BCE of one sample; analytic gradients against central differences for
/// every parameter not listed as frozen.
GradCheckReport grad_check_model(PhoVitModel& model, const Sample& sample,
                                 const GradCheckOptions& opts = {});

/// Seed-pinned fixture: 8 single-object 16 x 16 scenes of distinct colors with a
/// color query each, and a model sized for it.
struct ColorProbe {
  std::vector<Sample> batch;
  PhoVitModel model;
};
/// `table` replaces the random question embeddings when given (its width must be cfg.d).
ColorProbe color_probe(const PhoVitConfig& cfg, std::uint64_t seed,
                       const EmbeddingTable* table = nullptr);

struct ProbeResult {
  std::vector<double> losses;  // pre-update loss of every step
  double ratio() const { return losses.empty() ? 1.0 : losses.back() / losses.front(); }
};

/// `steps` train_step calls on the probe batch; the last entry is the loss after the final update.
ProbeResult run_training_probe(const PhoVitConfig& cfg, std::uint64_t seed, std::size_t steps = 300,
                               double lr = 0.05, const EmbeddingTable* table = nullptr);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Shape and invariant checks on the probe model: co-attention shapes for
/// K = 1..3, α normalization, truncation at max_len, sigmoid range, repeatable
/// forward, argmax of scores equal to argmax of logits.
std::vector<CheckResult> shape_suite(const PhoVitConfig& cfg, std::uint64_t seed);

}  // namespace viclevr::phovit
