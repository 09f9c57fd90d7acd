#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "viclevr/phovit.hpp"

using namespace viclevr;
using namespace viclevr::phovit;

namespace {

// Small enough that the finite-difference check stays under a few seconds.
PhoVitConfig small_config() {
  PhoVitConfig c;
  c.d = 8;
  c.latent = 8;
  c.n_heads = 2;
  c.K = 1;
  c.df = 8;
  c.ffn_hidden = 8;
  c.image_h = 8;
  c.image_w = 8;
  c.patch = 4;
  return c;
}

double max_abs_diff(const Tensor& a, const Tensor& b) { return (a - b).cwiseAbs().maxCoeff(); }

RasterImage gradient_image(std::size_t h, std::size_t w) {
  RasterImage img(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = 0.01 * static_cast<double>(y * w + x) + 0.1 * c;
  return img;
}

}  // namespace

TEST_CASE("build_answer_vocab") {
  const std::vector<std::string> answers{"a", "b", "a", "c", "b", "a"};
  const AnswerVocab v = build_answer_vocab(answers, 2);
  CHECK(v.answers() == std::vector<std::string>{"a", "b"});
  CHECK(v.index("A") == 0u);
  CHECK_FALSE(v.index("c").has_value());

  // ties break lexicographically
  CHECK(build_answer_vocab({"z", "y", "x"}, 2).answers() == std::vector<std::string>{"x", "y"});

  std::string warning;
  const AnswerVocab all = build_answer_vocab(answers, 10, &warning);
  CHECK(all.size() == 3);
  CHECK_FALSE(warning.empty());
  CHECK_THROWS_AS(build_answer_vocab(std::vector<std::string>{}, 1), std::invalid_argument);
}

TEST_CASE("question embedding rows") {
  SplitMix64 rng(1);
  const EmbeddingTable table = EmbeddingTable::random({"vật", "đỏ"}, 4, rng, 0.5);
  REQUIRE(table.size() == 3);
  PhoVitConfig cfg;
  const TokenSeq long_q(std::vector<std::string>(50, "vật"));
  CHECK(question_indices(long_q, table, cfg).size() == 44);
  const Tensor e = embed_question(long_q, table, table.matrix(), cfg);
  CHECK(e.rows() == 44);
  CHECK(e.row(43) == table.matrix().row(static_cast<Eigen::Index>(table.index("vật"))));

  const auto empty = question_indices({}, table, cfg);
  REQUIRE(empty.size() == 1);
  CHECK(empty[0] == table.unk_index());
  CHECK(question_indices({"khác"}, table, cfg)[0] == table.unk_index());
}

TEST_CASE("patchify") {
  const RasterImage img = gradient_image(16, 16);
  const Tensor p = patchify(img, 4);
  CHECK(p.rows() == 16);
  CHECK(p.cols() == 48);
  // patch 5 is row 1, col 1; its first pixel sits at (4, 4)
  CHECK(p(5, 0) == img.at(4, 4, 0));
  CHECK(p(5, 3 * 5 + 2) == img.at(5, 5, 2));

  const Tensor whole = patchify(img, 16);
  REQUIRE(whole.rows() == 1);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) CHECK(whole(0, static_cast<Eigen::Index>(i)) == img.pixels[i]);

  const Tensor flat = patchify(RasterImage(8, 8, 0.3), 4);
  for (Eigen::Index r = 1; r < flat.rows(); ++r) CHECK(flat.row(r) == flat.row(0));
  CHECK_THROWS_AS(patchify(img, 5), std::invalid_argument);
}

TEST_CASE("vit_encode") {
  ColorProbe probe = color_probe(small_config(), 3);
  const PhoVitConfig& c = probe.model.cfg;
  const Tensor patches = patchify(probe.batch[0].image, c.patch);
  Tape tape;
  Graph g(tape, probe.model);
  const Var out = vit_encode(g, tape.leaf(patches));
  CHECK(static_cast<std::size_t>(out.rows()) == c.n_patches() + 1);
  CHECK(static_cast<std::size_t>(out.cols()) == c.d);

  Tensor swapped = patches;
  swapped.row(0).swap(swapped.row(1));
  const Var other = vit_encode(g, tape.leaf(swapped));
  CHECK(max_abs_diff(out.value(), other.value()) > 1e-9);
  CHECK_THROWS_AS(vit_encode(g, tape.leaf(Tensor::Zero(3, 48))), std::invalid_argument);

  SUBCASE("no layers reduces to projection, class token, positions and adapter") {
    PhoVitConfig c0 = small_config();
    c0.n_vit_layers = 0;
    ColorProbe p0 = color_probe(c0, 3);
    const ParamStore& s = p0.model.params;
    Tensor x(static_cast<Eigen::Index>(c0.n_patches() + 1), static_cast<Eigen::Index>(c0.latent));
    x.row(0) = s.at("vit.cls").value;
    const Tensor proj = patchify(p0.batch[0].image, 4) * s.at("vit.patch.w").value;
    for (Eigen::Index r = 0; r < proj.rows(); ++r) x.row(r + 1) = proj.row(r) + s.at("vit.patch.b").value;
    x += s.at("vit.pos").value;
    Tensor expect = x * s.at("vit.adapter.w").value;
    expect.rowwise() += s.at("vit.adapter.b").value.row(0);
    Tape t0;
    Graph g0(t0, p0.model);
    const Var got = vit_encode(g0, t0.leaf(patchify(p0.batch[0].image, 4)));
    CHECK(max_abs_diff(got.value(), expect) < 1e-12);
  }
}

TEST_CASE("da_layer and stacking") {
  ColorProbe probe = color_probe(small_config(), 5);
  SplitMix64 rng(9);
  Tensor q(5, 8), i(5, 8), q2(3, 8);
  for (Eigen::Index k = 0; k < q.size(); ++k) q.data()[k] = rng.normal();
  for (Eigen::Index k = 0; k < i.size(); ++k) i.data()[k] = rng.normal();
  for (Eigen::Index k = 0; k < q2.size(); ++k) q2.data()[k] = rng.normal();

  Tape tape;
  Graph g(tape, probe.model);
  const auto [Qk, Ik] = da_layer(g, 0, tape.leaf(q), tape.leaf(i));
  CHECK(Qk.rows() == 5);
  CHECK(Qk.cols() == 8);
  CHECK(Ik.rows() == 5);
  CHECK(Ik.cols() == 8);
  CHECK_THROWS_AS(da_layer(g, 0, tape.leaf(Tensor::Zero(5, 7)), tape.leaf(i)), std::invalid_argument);

  // the question stream enters the image stream only through the GA values
  const auto [Qb, Ib] = da_layer(g, 0, tape.leaf(q2), tape.leaf(i));
  CHECK(max_abs_diff(Ik.value(), Ib.value()) > 1e-9);

  const auto stacked = stacked_coattention(g, tape.leaf(q), tape.leaf(i));
  CHECK(stacked.first.value() == Qk.value());
  CHECK(stacked.second.value() == Ik.value());

  probe.model.params.at("da.0.i_ga.attn.wv").value.setZero();
  probe.model.params.at("da.0.i_ga.attn.bv").value.setZero();
  Tape t2;
  Graph g2(t2, probe.model);
  const auto a = da_layer(g2, 0, t2.leaf(q), t2.leaf(i));
  const auto b = da_layer(g2, 0, t2.leaf(q2), t2.leaf(i));
  CHECK(max_abs_diff(a.second.value(), b.second.value()) < 1e-12);
}

TEST_CASE("attentional_reduce") {
  ColorProbe probe = color_probe(small_config(), 6);
  SplitMix64 rng(2);
  Tensor x(6, 8);
  for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = rng.normal();
  Tape tape;
  Graph g(tape, probe.model);
  Var alpha;
  const Var r = attentional_reduce(g, "q", tape.leaf(x), &alpha);
  CHECK(r.rows() == 1);
  CHECK(r.cols() == 8);
  CHECK(alpha.cols() == 6);
  CHECK(std::abs(alpha.value().sum() - 1.0) < 1e-12);
  CHECK(alpha.value().minCoeff() >= 0.0);

  const Tensor one = x.topRows(1);
  CHECK(max_abs_diff(attentional_reduce(g, "i", tape.leaf(one)).value(), one) < 1e-12);

  probe.model.params.at("reduce.q.score.w").value.setZero();
  Tape t2;
  Graph g2(t2, probe.model);
  const Var mean = attentional_reduce(g2, "q", t2.leaf(x));
  CHECK(max_abs_diff(mean.value(), x.colwise().mean()) < 1e-12);
}

TEST_CASE("fuse_classify") {
  ColorProbe probe = color_probe(small_config(), 8);
  SplitMix64 rng(4);
  Tensor a(1, 8), b(1, 8);
  for (Eigen::Index k = 0; k < 8; ++k) {
    a(0, k) = rng.normal();
    b(0, k) = rng.normal();
  }
  {
    Tape tape;
    Graph g(tape, probe.model);
    Var logits;
    const Var s = fuse_classify(g, tape.leaf(a), tape.leaf(b), &logits);
    CHECK(static_cast<std::size_t>(s.cols()) == probe.model.cfg.n_answers);
    CHECK(s.value().minCoeff() > 0.0);
    CHECK(s.value().maxCoeff() < 1.0);
    const Tensor expect = logits.value().unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    CHECK(max_abs_diff(s.value(), expect) < 1e-15);
    const Var swapped = fuse_classify(g, tape.leaf(b), tape.leaf(a));
    CHECK(max_abs_diff(s.value(), swapped.value()) > 1e-9);
  }
  probe.model.params.at("fuse.wx").value.setZero();
  probe.model.params.at("fuse.wy").value.setZero();
  Tape tape;
  Graph g(tape, probe.model);
  const Var s1 = fuse_classify(g, tape.leaf(a), tape.leaf(b));
  const Var s2 = fuse_classify(g, tape.leaf(b * 3.0), tape.leaf(a));
  CHECK(max_abs_diff(s1.value(), s2.value()) < 1e-12);
}

TEST_CASE("forward and train_step") {
  ColorProbe probe = color_probe(small_config(), 11);
  const Sample& s = probe.batch[2];
  const ForwardResult r1 = forward(s.image, s.question, probe.model);
  const ForwardResult r2 = forward(s.image, s.question, probe.model);
  CHECK(r1.probs == r2.probs);
  CHECK(r1.answer == probe.model.answers.answers()[r1.answer_index]);
  CHECK_THROWS_AS(forward(RasterImage(16, 16), s.question, probe.model), std::invalid_argument);

  std::vector<Tensor> before;
  for (const auto& p : probe.model.params.all()) before.push_back(p.value);
  const double loss = train_step(probe.batch, probe.model, 0.0);
  CHECK(std::isfinite(loss));
  for (std::size_t k = 0; k < before.size(); ++k) CHECK(probe.model.params.all()[k].value == before[k]);

  probe.model.params.at("out.w").frozen = true;
  const Tensor frozen = probe.model.params.at("out.w").value;
  const Tensor moving = probe.model.params.at("out.b").value;
  train_step(probe.batch, probe.model, 0.1);
  CHECK(probe.model.params.at("out.w").value == frozen);
  CHECK(probe.model.params.at("out.b").value != moving);

  // mean reduction is the summed loss over the batch size
  ColorProbe twin = color_probe(small_config(), 11);
  const double sum = train_step(twin.batch, twin.model, 0.0, tensor::BceReduction::sum);
  const double mean = train_step(twin.batch, twin.model, 0.0);
  CHECK(mean == doctest::Approx(sum / static_cast<double>(twin.batch.size())).epsilon(1e-12));
  CHECK_THROWS_AS(train_step({}, twin.model, 0.1), std::invalid_argument);
}

TEST_CASE("gradient check on a small model") {
  ColorProbe probe = color_probe(small_config(), 13);
  const GradCheckReport ok = grad_check_model(probe.model, probe.batch[0]);
  CHECK(ok.passed());
  CHECK(ok.checked_scalars == probe.model.params.scalar_count());
  for (const auto& [group, err] : ok.group_error) {
    INFO(group);
    CHECK(err < 1e-4);
  }
  CHECK(ok.to_json().contains("fuse"));

  GradCheckOptions frozen;
  frozen.frozen = {"embed.table"};
  const GradCheckReport skipped = grad_check_model(probe.model, probe.batch[0], frozen);
  REQUIRE(skipped.notices.size() == 1);
  CHECK(skipped.notices[0].find("embed.table") != std::string::npos);
  CHECK_FALSE(skipped.parameter_error.count("embed.table"));

  // a wrong backward rule must be caught
  GradCheckOptions fault;
  fault.fault_op = "gelu";
  const GradCheckReport bad = grad_check_model(probe.model, probe.batch[0], fault);
  CHECK_FALSE(bad.passed());
}

TEST_CASE("parameter_group") {
  CHECK(parameter_group("da.0.q_sa.attn.wq") == "da.0.q_sa.attn");
  CHECK(parameter_group("fuse.wx") == "fuse");
  CHECK(parameter_group("plain") == "plain");
}

TEST_CASE("config JSON") {
  const PhoVitConfig c = small_config();
  const PhoVitConfig back = PhoVitConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  nlohmann::json bad = c.to_json();
  bad["patch"] = 3;
  CHECK_THROWS_AS(PhoVitConfig::from_json(bad), std::invalid_argument);
}

TEST_CASE("shape_suite passes on the default config") {
  for (const CheckResult& r : shape_suite(PhoVitConfig{}, 7)) {
    INFO(r.name << ": " << r.detail);
    CHECK(r.passed);
  }
}

TEST_CASE("short training probe lowers the loss") {
  const ProbeResult r = run_training_probe(small_config(), 7, 40);
  REQUIRE(r.losses.size() == 41);
  CHECK(r.losses.back() < r.losses.front());
  const ProbeResult again = run_training_probe(small_config(), 7, 40);
  CHECK(again.losses == r.losses);
}
