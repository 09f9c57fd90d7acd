#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "viclevr/dataset.hpp"
#include "viclevr/text.hpp"

namespace viclevr {

struct BleuConfig {
  enum class Smoothing { none, add_one };
  std::size_t max_n = 4;
  std::vector<double> weights;  // empty means uniform 1/max_n
  Smoothing smoothing = Smoothing::none;

  /// Weights actually used: explicit ones or uniform. Throws std::invalid_argument
  /// when they are negative, do not sum to 1, or do not match max_n.
  std::vector<double> effective_weights() const;
};

struct RougeConfig {
  double beta = 1.2;
};

struct MeteorConfig {
  /// paper_literal: p = 0.5 (c / (|hypo| + |ref|))^3 with c the matched unigram count.
  /// canonical: p = 0.5 (chunks / matches)^3.
  enum class PenaltyMode { paper_literal, canonical };
  PenaltyMode penalty_mode = PenaltyMode::paper_literal;
};

struct MetricsConfig {
  BleuConfig bleu;
  RougeConfig rouge;
  MeteorConfig meteor;

  static MetricsConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Clipped n-gram statistics one hypothesis contributes to corpus BLEU.
struct BleuStats {
  std::vector<std::size_t> clipped;  // per order, index 0 is unigrams
  std::vector<std::size_t> totals;
  std::size_t hypo_length = 0;
  std::size_t ref_length = 0;

  BleuStats& operator+=(const BleuStats& other);
};

struct AnswerScore {
  std::int64_t question_id = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool exact_match = false;
  BleuStats bleu_contrib;
  double rouge_l = 0.0;
  double meteor = 0.0;
};

struct CorpusMetrics {
  double accuracy = 0.0;
  double precision_mean = 0.0;
  double recall_mean = 0.0;
  double f1_overall = 0.0;
  double bleu = 0.0;
  double rouge_l_mean = 0.0;
  double meteor_mean = 0.0;
  std::size_t n_questions = 0;

  nlohmann::json to_json() const;
};

/// Multiset-overlap precision/recall/F1 of an anticipated answer against the
/// standard answer. Both empty scores (1, 1, 1).
PrecisionRecallF1 answer_prf1(const TokenSeq& anticipated, const TokenSeq& standard);

/// Mean per-question F1, accumulated in ascending question_id order.
/// Throws std::invalid_argument on empty input.
double f1_overall(std::span<const AnswerScore> scores);

/// Fraction of gold questions whose normalized prediction equals the normalized
/// gold answer. Missing predictions count as wrong.
double exact_match_accuracy(const PredictionSet& preds, const Dataset& gold);

BleuStats bleu_stats(const TokenSeq& hypo, const TokenSeq& ref, std::size_t max_n);

/// Corpus BLEU from accumulated statistics. Orders for which no hypothesis has
/// any n-gram are dropped and the remaining weights renormalized.
/// Throws std::invalid_argument when the total hypothesis length is zero.
double bleu_from_stats(const BleuStats& stats, const BleuConfig& cfg);

using HypoRefPair = std::pair<TokenSeq, TokenSeq>;

/// Corpus BLEU over (hypothesis, reference) pairs. Throws on an empty corpus.
double bleu_corpus(std::span<const HypoRefPair> pairs, const BleuConfig& cfg = {});

/// ROUGE-L F-measure from LCS precision and recall.
double rouge_l(const TokenSeq& hypo, const TokenSeq& ref, const RougeConfig& cfg = {});

struct MeteorBreakdown {
  std::size_t matches = 0;
  std::size_t chunks = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f_mean = 0.0;
  double penalty = 0.0;
  double score = 0.0;
};

MeteorBreakdown meteor_breakdown(const TokenSeq& hypo, const TokenSeq& ref,
                                 const MeteorConfig& cfg = {});
double meteor(const TokenSeq& hypo, const TokenSeq& ref, const MeteorConfig& cfg = {});

AnswerScore score_answer(std::int64_t question_id, const std::string& anticipated,
                         const std::string& standard, const MetricsConfig& cfg);

struct Evaluation {
  CorpusMetrics corpus;
  std::vector<AnswerScore> scores;  // ascending question_id
};

/// Scores every gold question (missing predictions score as empty answers) and
/// aggregates in ascending question_id order.
Evaluation evaluate_all(const PredictionSet& preds, const Dataset& gold,
                        const MetricsConfig& cfg = {});

}  // namespace viclevr
