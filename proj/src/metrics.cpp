#include "viclevr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>

#include "viclevr/error.hpp"

namespace viclevr {

using nlohmann::json;

std::vector<double> BleuConfig::effective_weights() const {
  if (max_n == 0) throw std::invalid_argument("BLEU max_n must be >= 1");
  if (weights.empty()) return std::vector<double>(max_n, 1.0 / static_cast<double>(max_n));
  if (weights.size() != max_n) throw std::invalid_argument("BLEU weights must have max_n entries");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("BLEU weights must be >= 0");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("BLEU weights must sum to 1");
  return weights;
}

MetricsConfig MetricsConfig::from_json(const json& j) {
  MetricsConfig cfg;
  if (!j.is_object()) throw SchemaError("", "metrics config must be an object");
  try {
    if (const auto b = j.find("bleu"); b != j.end()) {
      cfg.bleu.max_n = b->value("max_n", cfg.bleu.max_n);
      cfg.bleu.weights = b->value("weights", cfg.bleu.weights);
      const std::string smoothing = b->value("smoothing", std::string("none"));
      if (smoothing == "none") {
        cfg.bleu.smoothing = BleuConfig::Smoothing::none;
      } else if (smoothing == "add_one") {
        cfg.bleu.smoothing = BleuConfig::Smoothing::add_one;
      } else {
        throw SchemaError("/bleu/smoothing", "expected 'none' or 'add_one'");
      }
    }
    if (const auto r = j.find("rouge"); r != j.end()) cfg.rouge.beta = r->value("beta", 1.2);
    if (const auto m = j.find("meteor"); m != j.end()) {
      const std::string mode = m->value("penalty_mode", std::string("paper_literal"));
      if (mode == "paper_literal") {
        cfg.meteor.penalty_mode = MeteorConfig::PenaltyMode::paper_literal;
      } else if (mode == "canonical") {
        cfg.meteor.penalty_mode = MeteorConfig::PenaltyMode::canonical;
      } else {
        throw SchemaError("/meteor/penalty_mode", "expected 'paper_literal' or 'canonical'");
      }
    }
  } catch (const json::type_error& e) {
    throw SchemaError("", std::string("metrics config: ") + e.what());
  }
  if (!(cfg.rouge.beta > 0.0) || !std::isfinite(cfg.rouge.beta)) {
    throw SchemaError("/rouge/beta", "beta must be finite and positive");
  }
  cfg.bleu.effective_weights();
  return cfg;
}

json MetricsConfig::to_json() const {
  return {{"bleu",
           {{"max_n", bleu.max_n},
            {"weights", bleu.effective_weights()},
            {"smoothing", bleu.smoothing == BleuConfig::Smoothing::none ? "none" : "add_one"}}},
          {"rouge", {{"beta", rouge.beta}}},
          {"meteor",
           {{"penalty_mode", meteor.penalty_mode == MeteorConfig::PenaltyMode::paper_literal
                                 ? "paper_literal"
                                 : "canonical"}}}};
}

json CorpusMetrics::to_json() const {
  return {{"accuracy", accuracy},       {"precision", precision_mean},
          {"recall", recall_mean},      {"f1_overall", f1_overall},
          {"bleu", bleu},               {"rouge_l", rouge_l_mean},
          {"meteor", meteor_mean},      {"n_questions", n_questions}};
}

namespace {

std::map<std::string, std::size_t> unigram_counts(const TokenSeq& t) {
  std::map<std::string, std::size_t> counts;
  for (const auto& tok : t) ++counts[tok];
  return counts;
}

std::size_t multiset_overlap(const TokenSeq& a, const TokenSeq& b) {
  const auto ca = unigram_counts(a);
  const auto cb = unigram_counts(b);
  std::size_t overlap = 0;
  for (const auto& [tok, n] : ca) {
    if (const auto it = cb.find(tok); it != cb.end()) overlap += std::min(n, it->second);
  }
  return overlap;
}

double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

PrecisionRecallF1 answer_prf1(const TokenSeq& anticipated, const TokenSeq& standard) {
  if (anticipated.empty() && standard.empty()) return {1.0, 1.0, 1.0};
  if (anticipated.empty() || standard.empty()) return {0.0, 0.0, 0.0};
  const auto overlap = static_cast<double>(multiset_overlap(standard, anticipated));
  PrecisionRecallF1 out;
  out.precision = overlap / static_cast<double>(anticipated.size());
  out.recall = overlap / static_cast<double>(standard.size());
  out.f1 = harmonic(out.precision, out.recall);
  return out;
}

double f1_overall(std::span<const AnswerScore> scores) {
  if (scores.empty()) throw std::invalid_argument("f1_overall: empty score list");
  std::vector<const AnswerScore*> ordered;
  ordered.reserve(scores.size());
  for (const auto& s : scores) ordered.push_back(&s);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto* a, const auto* b) { return a->question_id < b->question_id; });
  double sum = 0.0;
  for (const auto* s : ordered) sum += s->f1;
  return sum / static_cast<double>(scores.size());
}

double exact_match_accuracy(const PredictionSet& preds, const Dataset& gold) {
  if (gold.questions.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& q : gold.questions) {
    const std::string* p = preds.find(q.question_id);
    if (p && normalize_text(*p) == normalize_text(q.answer)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(gold.questions.size());
}

BleuStats& BleuStats::operator+=(const BleuStats& other) {
  if (clipped.size() < other.clipped.size()) {
    clipped.resize(other.clipped.size(), 0);
    totals.resize(other.totals.size(), 0);
  }
  for (std::size_t n = 0; n < other.clipped.size(); ++n) {
    clipped[n] += other.clipped[n];
    totals[n] += other.totals[n];
  }
  hypo_length += other.hypo_length;
  ref_length += other.ref_length;
  return *this;
}

BleuStats bleu_stats(const TokenSeq& hypo, const TokenSeq& ref, std::size_t max_n) {
  BleuStats stats;
  stats.clipped.assign(max_n, 0);
  stats.totals.assign(max_n, 0);
  stats.hypo_length = hypo.size();
  stats.ref_length = ref.size();
  for (std::size_t n = 1; n <= max_n; ++n) {
    const auto hypo_ngrams = ngram_counts(hypo, n);
    const auto ref_ngrams = ngram_counts(ref, n);
    for (const auto& [gram, count] : hypo_ngrams) {
      stats.totals[n - 1] += count;
      if (const auto it = ref_ngrams.find(gram); it != ref_ngrams.end()) {
        stats.clipped[n - 1] += std::min(count, it->second);
      }
    }
  }
  return stats;
}

double bleu_from_stats(const BleuStats& stats, const BleuConfig& cfg) {
  const std::vector<double> weights = cfg.effective_weights();
  if (stats.hypo_length == 0) throw std::invalid_argument("BLEU: total hypothesis length is zero");
  if (stats.clipped.size() < cfg.max_n) throw std::invalid_argument("BLEU: stats shorter than max_n");

  double weight_sum = 0.0;
  for (std::size_t n = 0; n < cfg.max_n; ++n) {
    if (stats.totals[n] > 0) weight_sum += weights[n];
  }
  if (weight_sum <= 0.0) return 0.0;

  double log_precision = 0.0;
  for (std::size_t n = 0; n < cfg.max_n; ++n) {
    if (stats.totals[n] == 0 || weights[n] == 0.0) continue;
    double matched = static_cast<double>(stats.clipped[n]);
    double total = static_cast<double>(stats.totals[n]);
    if (cfg.smoothing == BleuConfig::Smoothing::add_one) {
      matched += 1.0;
      total += 1.0;
    }
    if (matched == 0.0) return 0.0;
    log_precision += weights[n] / weight_sum * std::log(matched / total);
  }
  const double c = static_cast<double>(stats.hypo_length);
  const double r = static_cast<double>(stats.ref_length);
  const double log_bp = std::min(1.0 - r / c, 0.0);
  return std::exp(log_bp + log_precision);
}

double bleu_corpus(std::span<const HypoRefPair> pairs, const BleuConfig& cfg) {
  if (pairs.empty()) throw std::invalid_argument("BLEU: empty corpus");
  BleuStats total;
  for (const auto& [hypo, ref] : pairs) total += bleu_stats(hypo, ref, cfg.max_n);
  return bleu_from_stats(total, cfg);
}

double rouge_l(const TokenSeq& hypo, const TokenSeq& ref, const RougeConfig& cfg) {
  if (hypo.empty() && ref.empty()) return 1.0;
  if (hypo.empty() || ref.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(hypo, ref));
  if (lcs == 0.0) return 0.0;
  const double recall = lcs / static_cast<double>(ref.size());
  const double precision = lcs / static_cast<double>(hypo.size());
  const double beta2 = cfg.beta * cfg.beta;
  return (1.0 + beta2) * recall * precision / (recall + beta2 * precision);
}

MeteorBreakdown meteor_breakdown(const TokenSeq& hypo, const TokenSeq& ref,
                                 const MeteorConfig& cfg) {
  MeteorBreakdown out;
  if (hypo.empty() && ref.empty()) {
    out.precision = out.recall = out.f_mean = out.score = 1.0;
    return out;
  }
  if (hypo.empty() || ref.empty()) return out;
  const AlignmentMap alignment = align_unigrams(hypo, ref);
  out.matches = alignment.pairs.size();
  out.chunks = alignment.chunk_count;
  if (out.matches == 0) return out;
  const auto m = static_cast<double>(out.matches);
  out.precision = m / static_cast<double>(hypo.size());
  out.recall = m / static_cast<double>(ref.size());
  out.f_mean = 10.0 * out.precision * out.recall / (out.recall + 9.0 * out.precision);
  const double ratio =
      cfg.penalty_mode == MeteorConfig::PenaltyMode::paper_literal
          ? m / static_cast<double>(hypo.size() + ref.size())
          : static_cast<double>(out.chunks) / m;
  out.penalty = 0.5 * ratio * ratio * ratio;
  out.score = out.f_mean * (1.0 - out.penalty);
  return out;
}

double meteor(const TokenSeq& hypo, const TokenSeq& ref, const MeteorConfig& cfg) {
  return meteor_breakdown(hypo, ref, cfg).score;
}

AnswerScore score_answer(std::int64_t question_id, const std::string& anticipated,
                         const std::string& standard, const MetricsConfig& cfg) {
  const TokenSeq aa = tokenize(anticipated);
  const TokenSeq sa = tokenize(standard);
  AnswerScore s;
  s.question_id = question_id;
  const auto prf = answer_prf1(aa, sa);
  s.precision = prf.precision;
  s.recall = prf.recall;
  s.f1 = prf.f1;
  s.exact_match = normalize_text(anticipated) == normalize_text(standard);
  s.bleu_contrib = bleu_stats(aa, sa, cfg.bleu.max_n);
  s.rouge_l = rouge_l(aa, sa, cfg.rouge);
  s.meteor = meteor(aa, sa, cfg.meteor);
  return s;
}

Evaluation evaluate_all(const PredictionSet& preds, const Dataset& gold, const MetricsConfig& cfg) {
  Evaluation ev;
  std::vector<const QAPair*> ordered;
  ordered.reserve(gold.questions.size());
  for (const auto& q : gold.questions) ordered.push_back(&q);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return a->question_id < b->question_id; });

  ev.scores.reserve(ordered.size());
  for (const QAPair* q : ordered) {
    const std::string* p = preds.find(q->question_id);
    ev.scores.push_back(score_answer(q->question_id, p ? *p : std::string{}, q->answer, cfg));
  }

  CorpusMetrics& c = ev.corpus;
  c.n_questions = ev.scores.size();
  if (ev.scores.empty()) return ev;

  BleuStats bleu_total;
  bleu_total.clipped.assign(cfg.bleu.max_n, 0);
  bleu_total.totals.assign(cfg.bleu.max_n, 0);
  std::size_t exact = 0;
  for (const auto& s : ev.scores) {
    exact += s.exact_match ? 1 : 0;
    c.precision_mean += s.precision;
    c.recall_mean += s.recall;
    c.rouge_l_mean += s.rouge_l;
    c.meteor_mean += s.meteor;
    bleu_total += s.bleu_contrib;
  }
  const auto n = static_cast<double>(ev.scores.size());
  c.accuracy = static_cast<double>(exact) / n;
  c.precision_mean /= n;
  c.recall_mean /= n;
  c.rouge_l_mean /= n;
  c.meteor_mean /= n;
  c.f1_overall = f1_overall(ev.scores);
  c.bleu = bleu_total.hypo_length == 0 ? 0.0 : bleu_from_stats(bleu_total, cfg.bleu);
  return ev;
}

}  // namespace viclevr
