// One line per acceptance criterion: PASS, FAIL or SKIP, with the runtime and
// a short detail. Exit status is 1 when anything fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "viclevr/analysis.hpp"
#include "viclevr/dataset.hpp"
#include "viclevr/metrics.hpp"
#include "viclevr/phovit.hpp"
#include "viclevr/report.hpp"
#include "viclevr/scenegen.hpp"

using namespace viclevr;
using namespace viclevr::oracle;

namespace {

enum class Status { pass, fail, skip };

// Collects failed expectations; only the first few are kept for the report.
struct Checks {
  std::size_t total = 0;
  std::vector<std::string> failures;
  std::size_t failed = 0;

  void expect(bool ok, const std::string& what) {
    ++total;
    if (ok) return;
    ++failed;
    if (failures.size() < 3) failures.push_back(what);
  }
  void near(double got, double want, double tol, const std::string& what) {
    std::ostringstream s;
    s.precision(12);
    s << what << ": got " << got << ", want " << want;
    expect(std::abs(got - want) <= tol, s.str());
  }
  std::string summary() const {
    std::string s = std::to_string(total - failed) + "/" + std::to_string(total) + " checks";
    for (const auto& f : failures) s += "; " + f;
    return s;
  }
};

struct Outcome {
  Status status = Status::pass;
  std::string detail;
};

Outcome from(const Checks& c, std::string extra = "") {
  std::string detail = c.summary();
  if (!extra.empty()) detail += ", " + extra;
  return {c.failed ? Status::fail : Status::pass, detail};
}

int failures = 0;

void criterion(int id, const std::string& title, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {Status::fail, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (o.status != Status::skip && secs > limit_s) {
    o.status = Status::fail;
    o.detail += ", over the " + std::to_string(static_cast<int>(limit_s)) + " s limit";
  }
  const char* tag = o.status == Status::pass ? "PASS" : o.status == Status::fail ? "FAIL" : "SKIP";
  if (o.status == Status::fail) ++failures;
  std::printf("%s [%d] %s (%.2f s): %s\n", tag, id, title.c_str(), secs, o.detail.c_str());
  std::fflush(stdout);
}

constexpr double kTol = 1e-9;

Outcome metric_exactness() {
  Checks c;
  const auto prf = answer_prf1(TokenSeq{"xanh"}, TokenSeq{"màu", "xanh"});
  c.near(prf.precision, 1.0, kTol, "P");
  c.near(prf.recall, 0.5, kTol, "R");
  c.near(prf.f1, 2.0 / 3.0, kTol, "F1");
  const auto same = answer_prf1(TokenSeq{"a", "b"}, TokenSeq{"a", "b"});
  c.expect(same.precision == 1.0 && same.recall == 1.0 && same.f1 == 1.0, "prf1 identity");
  const auto none = answer_prf1(TokenSeq{"a"}, TokenSeq{"b"});
  c.expect(none.precision == 0.0 && none.recall == 0.0 && none.f1 == 0.0, "prf1 disjoint");

  auto scores = [](std::vector<double> f) {
    std::vector<AnswerScore> s(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
      s[i].question_id = static_cast<std::int64_t>(i);
      s[i].f1 = f[i];
    }
    return s;
  };
  c.near(f1_overall(scores({1.0, 0.5})), 0.75, kTol, "f1_overall mean");
  c.near(f1_overall(scores({0.0, 0.0})), 0.0, kTol, "f1_overall zeros");
  c.near(f1_overall(scores({2.0 / 3.0, 1.0, 0.0})), 5.0 / 9.0, kTol, "f1_overall 5/9");

  Dataset gold;
  gold.images.push_back({1, "a", Split::test, {}, {}});
  const std::vector<std::string> answers{"đỏ", "xanh", "2", "có"};
  for (std::size_t i = 0; i < answers.size(); ++i)
    gold.questions.push_back({static_cast<std::int64_t>(i + 1), 1, "câu hỏi ?", answers[i], std::nullopt});
  auto preds = [](std::vector<std::string> a) {
    std::vector<Prediction> p;
    for (std::size_t i = 0; i < a.size(); ++i) p.push_back({static_cast<std::int64_t>(i + 1), a[i]});
    return PredictionSet(p);
  };
  c.near(exact_match_accuracy(preds({"đỏ", "xanh", "2", "không"}), gold), 0.75, kTol, "accuracy 3/4");
  c.near(exact_match_accuracy(preds(answers), gold), 1.0, kTol, "accuracy all");
  c.near(exact_match_accuracy(preds({"a", "b", "c", "d"}), gold), 0.0, kTol, "accuracy none");

  const std::vector<HypoRefPair> ident{{TokenSeq{"a", "b", "c", "d", "e"}, TokenSeq{"a", "b", "c", "d", "e"}}};
  c.near(bleu_corpus(ident), 1.0, kTol, "BLEU identity");
  BleuConfig one;
  one.max_n = 1;
  const std::vector<HypoRefPair> single{{TokenSeq{"một", "khối", "trụ"}, TokenSeq{"một", "khối", "lập", "phương"}}};
  const double b1 = bleu_corpus(single, one);
  c.near(b1, std::exp(-1.0 / 3.0) * 2.0 / 3.0, kTol, "BLEU-1");
  c.near(b1, 0.4777, 5e-5, "BLEU-1 rounded");
  const std::vector<HypoRefPair> disjoint{{TokenSeq{"a", "b"}, TokenSeq{"c", "d"}}};
  c.near(bleu_corpus(disjoint), 0.0, kTol, "BLEU disjoint");

  for (double beta : {0.5, 1.0, 1.2, 3.0})
    c.near(rouge_l(TokenSeq{"a", "b", "c"}, TokenSeq{"a", "b", "c"}, {beta}), 1.0, kTol, "ROUGE-L identity");
  const double r = rouge_l(TokenSeq{"a", "c", "d"}, TokenSeq{"a", "b", "c", "d"}, {1.2});
  c.near(r, 2.44 * 0.75 / (0.75 + 1.44), kTol, "ROUGE-L");
  c.near(r, 0.8356, 5e-5, "ROUGE-L rounded");
  c.near(rouge_l(TokenSeq{"a"}, TokenSeq{"b"}, {1.2}), 0.0, kTol, "ROUGE-L disjoint");

  for (std::size_t len = 1; len <= 8; ++len) {
    std::vector<std::string> t;
    for (std::size_t i = 0; i < len; ++i) t.push_back("t" + std::to_string(i));
    c.near(meteor(TokenSeq(t), TokenSeq(t)), 0.9375, kTol, "METEOR identity L=" + std::to_string(len));
  }
  const auto mb = meteor_breakdown(TokenSeq{"một", "khối", "đỏ"}, TokenSeq{"một", "khối", "màu", "đỏ"});
  c.near(mb.precision, 1.0, kTol, "METEOR P");
  c.near(mb.recall, 0.75, kTol, "METEOR R");
  c.near(mb.f_mean, 7.5 / 9.75, kTol, "METEOR F_mean");
  c.near(mb.penalty, 0.5 * std::pow(3.0 / 7.0, 3), kTol, "METEOR penalty");
  c.near(mb.score, (7.5 / 9.75) * (1.0 - 0.5 * std::pow(3.0 / 7.0, 3)), kTol, "METEOR score");
  c.near(mb.score, 0.7390, 5e-5, "METEOR rounded");
  c.near(meteor(TokenSeq{"a"}, TokenSeq{"b"}), 0.0, kTol, "METEOR disjoint");

  const Evaluation perfect = evaluate_all(preds(answers), gold);
  c.near(perfect.corpus.accuracy, 1.0, kTol, "identity accuracy");
  c.near(perfect.corpus.f1_overall, 1.0, kTol, "identity f1_overall");
  c.near(perfect.corpus.bleu, 1.0, kTol, "identity bleu");
  c.near(perfect.corpus.rouge_l_mean, 1.0, kTol, "identity rouge");
  c.near(perfect.corpus.meteor_mean, 0.9375, kTol, "identity meteor");
  const Evaluation wrong = evaluate_all(preds({"w", "x", "y", "z"}), gold);
  c.expect(wrong.corpus.accuracy == 0.0 && wrong.corpus.f1_overall == 0.0 && wrong.corpus.bleu == 0.0 &&
               wrong.corpus.rouge_l_mean == 0.0 && wrong.corpus.meteor_mean == 0.0,
           "all-wrong corpus scores zero");
  return from(c);
}

Outcome oracle_equivalence() {
  Checks c;
  SplitMix64 rng(2024);
  for (int i = 0; i < 200; ++i) {
    const TokenSeq a = random_seq(rng, 10, 3), b = random_seq(rng, 10, 3);
    c.expect(lcs_length(a, b) == brute_lcs(a, b), "lcs pair " + std::to_string(i));
  }
  std::vector<HypoRefPair> all;
  double worst = 0.0;
  std::size_t nonzero = 0;
  for (int i = 0; i < 50; ++i) {
    HypoRefPair p{random_seq(rng, 1, 9, 4), random_seq(rng, 1, 9, 4)};
    all.push_back(p);
    const std::vector<HypoRefPair> one{p};
    for (std::size_t n : {1, 2, 4}) {
      BleuConfig cfg;
      cfg.max_n = n;
      cfg.weights.assign(n, 1.0 / static_cast<double>(n));
      const double got = bleu_corpus(one, cfg);
      const double diff = std::abs(got - direct_bleu(one, n));
      nonzero += got > 0.0 ? 1 : 0;
      worst = std::max(worst, diff);
      c.expect(diff <= kTol, "bleu pair " + std::to_string(i) + " max_n " + std::to_string(n));
    }
  }
  const double corpus_diff = std::abs(bleu_corpus(all) - direct_bleu(all, 4));
  c.expect(corpus_diff <= kTol, "bleu over the 50-pair corpus");
  worst = std::max(worst, corpus_diff);
  std::ostringstream extra;
  extra << nonzero << " of 150 pair scores nonzero, max BLEU deviation " << worst;
  return from(c, extra.str());
}

Outcome generator_soundness() {
  Checks c;
  SplitMix64 rng(99);
  const GenConfig cfg;
  const Lexicon lex = Lexicon::defaults();
  std::size_t pairs = 0, attempts = 0, min_obj = 100, max_obj = 0;
  auto track = [&](const Scene& s) {
    min_obj = std::min(min_obj, s.objects.size());
    max_obj = std::max(max_obj, s.objects.size());
    c.expect(s.objects.size() >= 3 && s.objects.size() <= 10, "object count in [3,10]");
  };
  while (pairs < 1000 && attempts < 5000) {
    const Scene s = generate_scene(rng, cfg, static_cast<std::int64_t>(attempts++));
    track(s);
    const Category cat = kCategories[rng.uniform(kCategories.size())];
    const auto p = sample_program(cat, s, rng);
    if (!p) continue;
    ++pairs;
    const auto want = Naive{s}.answer(*p, lex);
    c.expect(want.has_value() && execute_program(*p, s) == *want, "pair " + std::to_string(pairs));
  }
  c.expect(pairs == 1000, "1000 sampled pairs");

  std::size_t datasets = 0, errors = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    GenConfig g;
    g.seed = seed;
    g.n_scenes = 25;
    g.questions_per_scene = 1 + seed % 5;
    if (seed % 2) g.mix_mode = GenConfig::MixMode::quota;
    const GeneratedDataset gen = generate_dataset(g);
    for (const auto& s : gen.scenes) track(s);
    const ValidationReport r = validate(gen.dataset);
    errors += r.errors.size();
    c.expect(r.errors.empty(), "validate seed " + std::to_string(seed));
    // the sidecar programs reproduce the stored answers
    for (std::size_t i = 0; i < gen.programs.size(); ++i) {
      const QAPair& q = gen.dataset.questions[i];
      const ImageEntry* img = gen.dataset.find_image(q.image_id);
      c.expect(img && img->scene && execute_program(gen.programs[i].program, *img->scene) == q.answer,
               "sidecar question " + std::to_string(q.question_id));
    }
    ++datasets;
  }
  return from(c, std::to_string(pairs) + " pairs, " + std::to_string(datasets) + " datasets with " +
                     std::to_string(errors) + " validation errors, objects " + std::to_string(min_obj) +
                     ".." + std::to_string(max_obj));
}

std::size_t row_n(const BreakdownTable& t, std::string_view group) {
  for (const auto& r : t.rows)
    if (r.group == group) return r.n;
  return 0;
}

Outcome analysis_fidelity() {
  Checks c;
  // planted category mix, realized exactly by quota mode
  GenConfig g;
  g.seed = 5;
  g.n_scenes = 50;
  g.questions_per_scene = 2;
  g.mix_mode = GenConfig::MixMode::quota;
  g.category_mix = {{Category::count, 0.6}, {Category::color, 0.4}};
  const GeneratedDataset gen = generate_dataset(g);
  const HeuristicDependencyProvider dep;
  const KeywordRules rules = KeywordRules::defaults();
  const auto prof = profile_questions(gen.dataset, rules, length_quartiles(gen.dataset), dep);
  std::vector<AnswerScore> scores;
  for (const auto& q : gen.dataset.questions) {
    AnswerScore s;
    s.question_id = q.question_id;
    scores.push_back(s);
  }
  const BreakdownTable cats = breakdown(scores, prof, Dimension::category);
  std::map<Category, std::size_t> bookkeeping = gen.category_counts;
  std::size_t listed = 0;
  for (Category cat : kCategories) {
    const std::size_t want = bookkeeping.count(cat) ? bookkeeping.at(cat) : 0;
    c.expect(row_n(cats, name(cat)) == want, std::string("category ") + std::string(name(cat)));
    listed += want;
  }
  c.expect(bookkeeping[Category::count] == 60 && bookkeeping[Category::color] == 40, "planted 60/40");
  c.expect(listed == gen.dataset.questions.size(), "bookkeeping covers every question");

  // planted lengths, grouped against an independent nearest-rank computation
  SplitMix64 rng(17);
  Dataset d;
  d.images.push_back({1, "a", Split::train, {}, {}});
  std::vector<std::size_t> lengths;
  for (int i = 0; i < 300; ++i) {
    const std::size_t n = 3 + rng.uniform(30);
    lengths.push_back(n);
    std::string q;
    for (std::size_t w = 0; w < n; ++w) q += (w ? " t" : "t") + std::to_string(w);
    d.questions.push_back({i + 1, 1, q, "x", Category::shape});
  }
  std::vector<std::size_t> sorted = lengths;
  std::sort(sorted.begin(), sorted.end());
  auto rank = [&](double p) { return sorted[static_cast<std::size_t>(std::ceil(p * sorted.size())) - 1]; };
  const std::size_t q1 = rank(0.25), q2 = rank(0.5), q3 = rank(0.75);
  const Quartiles quart = length_quartiles(d);
  c.expect(quart == Quartiles{static_cast<double>(q1), static_cast<double>(q2), static_cast<double>(q3)}, "nearest-rank quartiles");
  std::map<std::string, std::size_t> expected;
  for (std::size_t n : lengths) {
    const char* group = n <= q1 ? "short" : n <= q2 ? "medium" : n <= q3 ? "long" : "very_long";
    ++expected[group];
  }
  const auto lprof = profile_questions(d, rules, quart, dep);
  std::vector<AnswerScore> lscores(d.questions.size());
  for (std::size_t i = 0; i < lscores.size(); ++i) lscores[i].question_id = d.questions[i].question_id;
  const BreakdownTable groups = breakdown(lscores, lprof, Dimension::length_group);
  for (LengthGroup lg : {LengthGroup::short_, LengthGroup::medium, LengthGroup::long_, LengthGroup::very_long})
    c.expect(row_n(groups, name(lg)) == expected[std::string(name(lg))], std::string("group ") + std::string(name(lg)));

  const Quartiles fig{16, 19, 24};
  c.expect(assign_length_group(16, fig) == LengthGroup::short_, "16 -> short");
  c.expect(assign_length_group(17, fig) == LengthGroup::medium, "17 -> medium");
  c.expect(assign_length_group(25, fig) == LengthGroup::very_long, "25 -> very_long");
  return from(c, "planted " + std::to_string(gen.dataset.questions.size()) + " questions");
}

Outcome official_counts() {
  const char* env = std::getenv("VICLEVR_OFFICIAL_DATA");
  if (!env || !std::filesystem::exists(env)) {
    return {Status::skip, "official dataset not supplied (set VICLEVR_OFFICIAL_DATA to its JSON)"};
  }
  Checks c;
  const Dataset d = load_dataset(env);
  const OverlapStats o = overlap_stats(d);
  auto questions = [&](Split s) { return o.per_split.count(s) ? o.per_split.at(s).questions : 0; };
  auto overlap = [&](Split s) {
    return o.per_split.count(s) ? o.per_split.at(s).overlap_with_train.value_or(0) : 0;
  };
  c.expect(questions(Split::train) == 21000, "train 21,000");
  c.expect(questions(Split::dev) == 6000, "dev 6,000");
  c.expect(questions(Split::test) == 5000, "test 5,000");
  c.expect(overlap(Split::dev) == 134, "dev overlap 134");
  c.expect(overlap(Split::test) == 96, "test overlap 96");
  return from(c, "train/dev/test " + std::to_string(questions(Split::train)) + "/" +
                     std::to_string(questions(Split::dev)) + "/" + std::to_string(questions(Split::test)) +
                     ", overlap " + std::to_string(overlap(Split::dev)) + "/" +
                     std::to_string(overlap(Split::test)));
}

Outcome gradient_check() {
  phovit::ColorProbe probe = phovit::color_probe(phovit::PhoVitConfig{}, 7);
  const phovit::GradCheckReport r = phovit::grad_check_model(probe.model, probe.batch.front());
  Checks c;
  std::string worst_group;
  double worst = 0.0;
  for (const auto& [group, err] : r.group_error) {
    c.expect(err < 1e-4, group);
    if (err >= worst) worst = err, worst_group = group;
  }
  c.expect(r.checked_scalars == probe.model.params.scalar_count(), "every scalar checked");
  std::ostringstream extra;
  extra << r.group_error.size() << " groups, " << r.checked_scalars << " scalars, worst " << worst_group
        << " " << worst;
  return from(c, extra.str());
}

Outcome shape_suite() {
  Checks c;
  for (const auto& r : phovit::shape_suite(phovit::PhoVitConfig{}, 7)) c.expect(r.passed, r.name + " " + r.detail);
  return from(c);
}

Outcome training_probe() {
  const phovit::PhoVitConfig cfg;
  const phovit::ProbeResult a = phovit::run_training_probe(cfg, 7, 300, 0.05);
  const phovit::ProbeResult b = phovit::run_training_probe(cfg, 7, 300, 0.05);
  Checks c;
  c.expect(a.ratio() <= 0.5, "final loss at most half the initial loss");
  c.expect(a.losses == b.losses, "bit-identical trajectories");
  std::ostringstream extra;
  extra << "loss " << a.losses.front() << " -> " << a.losses.back() << " (ratio " << a.ratio() << ")";
  return from(c, extra.str());
}

Outcome disclosure() {
  Checks c;
  Dataset gold;
  gold.images.push_back({1, "a", Split::test, {}, {}});
  gold.questions.push_back({1, 1, "có bao nhiêu vật ?", "2", Category::count});
  const Evaluation e = evaluate_all(PredictionSet({{1, "3"}}), gold);
  const HeuristicDependencyProvider dep;
  const auto prof = profile_questions(gold, KeywordRules::defaults(), length_quartiles(gold), dep);
  const ReportDocument doc = evaluation_document(e, prof, "probe");
  if (doc.sections.empty()) return {Status::fail, "evaluation document has no sections"};
  const Section& metrics = doc.sections.front();
  const auto* table = std::get_if<Table>(&metrics.body);
  c.expect(table != nullptr, "metric section is a table");
  if (table) {
    const std::vector<std::string> want{"Method", "Accuracy", "Precision", "Recall", "F1_overall",
                                        "BLEU",   "ROUGE",    "METEOR"};
    c.expect(table->columns == want, "column order");
    // the row holds this run's scores, not the reference values
    c.expect(!table->rows.empty() && std::get<double>(table->rows[0][1]) == e.corpus.accuracy,
             "row carries computed accuracy");
  }
  const bool annotated = std::any_of(metrics.annotations.begin(), metrics.annotations.end(),
                                     [](const std::string& a) { return a.find("0.468") != std::string::npos; });
  c.expect(annotated, "reference scores carried as an annotation");

  const ReportDocument an = analysis_document(gold, KeywordRules::defaults(), dep);
  bool complexity_note = false;
  for (const auto& s : an.sections)
    for (const auto& a : s.annotations)
      complexity_note = complexity_note || a.find("not comparable") != std::string::npos;
  c.expect(complexity_note, "dependency/height statistics flagged as non-comparable");
  return from(c);
}

}  // namespace

int main() {
  criterion(1, "metric exactness", 1, metric_exactness);
  criterion(2, "oracle equivalence (LCS, BLEU)", 10, oracle_equivalence);
  criterion(3, "generator soundness", 30, generator_soundness);
  criterion(4, "analysis fidelity", 30, analysis_fidelity);
  criterion(4, "official split and overlap counts", 60, official_counts);
  criterion(5, "model gradient check", 120, gradient_check);
  criterion(6, "model shape and invariant suite", 10, shape_suite);
  criterion(7, "training probe", 120, training_probe);
  criterion(8, "report format and reference annotations", 10, disclosure);
  std::printf("%s: %d failing criteria\n", failures ? "FAILED" : "OK", failures);
  return failures ? 1 : 0;
}
