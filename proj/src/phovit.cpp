#include "viclevr/phovit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "viclevr/error.hpp"
#include "viclevr/scenegen.hpp"

namespace viclevr::phovit {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

void PhoVitConfig::check() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("PhoVitConfig: " + what); };
  if (d == 0 || latent == 0 || df == 0 || ffn_hidden == 0) fail("widths must be positive");
  if (n_heads == 0 || d % n_heads != 0) fail("d must be divisible by n_heads");
  if (latent % n_heads != 0) fail("latent must be divisible by n_heads");
  if (patch == 0 || image_h % patch != 0 || image_w % patch != 0) {
    fail("image height and width must be divisible by the patch size");
  }
  if (channels == 0) fail("channels must be positive");
  if (max_len == 0) fail("max_len must be positive");
  if (K == 0) fail("K must be at least 1");
  if (n_answers == 0) fail("n_answers must be positive");
  if (!(init_sigma > 0.0) || !(ln_eps > 0.0)) fail("init_sigma and ln_eps must be positive");
}

PhoVitConfig PhoVitConfig::from_json(const json& j) {
  PhoVitConfig c;
  if (!j.is_object()) throw SchemaError("", "model config must be an object");
  auto read = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      field = j[key].get<std::decay_t<decltype(field)>>();
    } catch (const json::exception& e) {
      throw SchemaError(std::string("/") + key, e.what());
    }
  };
  read("d", c.d);
  read("max_len", c.max_len);
  read("image_h", c.image_h);
  read("image_w", c.image_w);
  read("channels", c.channels);
  read("patch", c.patch);
  read("latent", c.latent);
  read("n_vit_layers", c.n_vit_layers);
  read("K", c.K);
  read("n_heads", c.n_heads);
  read("n_reduce_layers", c.n_reduce_layers);
  read("df", c.df);
  read("ffn_hidden", c.ffn_hidden);
  read("n_answers", c.n_answers);
  read("seed", c.seed);
  read("init_sigma", c.init_sigma);
  read("ln_eps", c.ln_eps);
  c.check();
  return c;
}

json PhoVitConfig::to_json() const {
  return {{"d", d},
          {"max_len", max_len},
          {"image_h", image_h},
          {"image_w", image_w},
          {"channels", channels},
          {"patch", patch},
          {"latent", latent},
          {"n_vit_layers", n_vit_layers},
          {"K", K},
          {"n_heads", n_heads},
          {"n_reduce_layers", n_reduce_layers},
          {"df", df},
          {"ffn_hidden", ffn_hidden},
          {"n_answers", n_answers},
          {"seed", seed},
          {"init_sigma", init_sigma},
          {"ln_eps", ln_eps}};
}

// ---------------------------------------------------------------------------
// Vocabularies

EmbeddingTable EmbeddingTable::random(const std::vector<std::string>& tokens, std::size_t d,
                                      SplitMix64& rng, double sigma) {
  EmbeddingTable t;
  std::vector<std::string> sorted(tokens);
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  t.tokens_.push_back(kUnk);
  for (auto& tok : sorted) {
    if (tok != kUnk) t.tokens_.push_back(std::move(tok));
  }
  for (std::size_t i = 0; i < t.tokens_.size(); ++i) t.index_[t.tokens_[i]] = i;
  const auto rows = static_cast<Eigen::Index>(t.tokens_.size());
  t.matrix_.resize(rows, static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < t.matrix_.size(); ++i) t.matrix_.data()[i] = sigma * rng.normal();
  return t;
}

EmbeddingTable EmbeddingTable::load_word2vec(const std::filesystem::path& path, std::size_t d) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read embeddings " + path.string());
  EmbeddingTable t;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string token;
    fields >> token;
    std::vector<double> values;
    std::string v;
    while (fields >> v) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(v, &used));
        if (used != v.size()) throw std::invalid_argument(v);
      } catch (const std::exception&) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + v + "'");
      }
    }
    if (line_no == 1 && values.size() == 1 && token.find_first_not_of("0123456789") == std::string::npos) {
      continue;  // "count width" header
    }
    if (values.size() != d) {
      throw SchemaError(path.string() + ":" + std::to_string(line_no),
                        "expected " + std::to_string(d) + " values, got " + std::to_string(values.size()));
    }
    if (t.index_.count(token)) continue;
    t.index_[token] = t.tokens_.size();
    t.tokens_.push_back(token);
    rows.push_back(std::move(values));
  }
  if (!t.index_.count(kUnk)) {
    t.index_[kUnk] = t.tokens_.size();
    t.tokens_.push_back(kUnk);
    rows.emplace_back(d, 0.0);
  }
  t.unk_ = t.index_.at(kUnk);
  t.matrix_.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      t.matrix_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return t;
}

std::size_t EmbeddingTable::index(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? unk_ : it->second;
}

AnswerVocab::AnswerVocab(std::vector<std::string> answers) : answers_(std::move(answers)) {
  for (std::size_t i = 0; i < answers_.size(); ++i) {
    if (!index_.emplace(answers_[i], i).second) {
      throw std::invalid_argument("duplicate answer '" + answers_[i] + "'");
    }
  }
}

std::optional<std::size_t> AnswerVocab::index(const std::string& answer) const {
  const auto it = index_.find(normalize_text(answer));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

AnswerVocab build_answer_vocab(const std::vector<std::string>& answers, std::size_t n,
                               std::string* warning) {
  if (answers.empty()) throw std::invalid_argument("build_answer_vocab: no answers");
  std::map<std::string, std::size_t> freq;
  for (const auto& a : answers) ++freq[normalize_text(a)];
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& x, const auto& y) { return x.second > y.second; });
  if (n > ranked.size()) {
    if (warning) {
      *warning = "requested " + std::to_string(n) + " answers but only " +
                 std::to_string(ranked.size()) + " are distinct";
    }
    n = ranked.size();
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(ranked[i].first);
  return AnswerVocab(std::move(out));
}

AnswerVocab build_answer_vocab(const Dataset& d, std::size_t n, std::string* warning) {
  std::vector<std::string> answers;
  for (const QAPair* q : d.questions_in(Split::train)) answers.push_back(q->answer);
  if (answers.empty()) throw std::invalid_argument("build_answer_vocab: train split is empty");
  return build_answer_vocab(answers, n, warning);
}

// ---------------------------------------------------------------------------
// Inputs

std::vector<std::size_t> question_indices(const TokenSeq& tokens, const EmbeddingTable& table,
                                          const PhoVitConfig& cfg) {
  std::vector<std::size_t> idx;
  const std::size_t n = std::min(tokens.size(), cfg.max_len);
  for (std::size_t i = 0; i < n; ++i) idx.push_back(table.index(tokens[i]));
  if (idx.empty()) idx.push_back(table.unk_index());
  return idx;
}

Tensor embed_question(const TokenSeq& tokens, const EmbeddingTable& table, const Tensor& matrix,
                      const PhoVitConfig& cfg) {
  const auto idx = question_indices(tokens, table, cfg);
  Tensor out(static_cast<Eigen::Index>(idx.size()), matrix.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = matrix.row(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

Tensor patchify(const RasterImage& img, std::size_t P) {
  if (P == 0 || img.height % P != 0 || img.width % P != 0) {
    throw std::invalid_argument("patchify: image size not divisible by the patch size");
  }
  const std::size_t ph = img.height / P, pw = img.width / P, C = RasterImage::channels;
  Tensor out(static_cast<Eigen::Index>(ph * pw), static_cast<Eigen::Index>(P * P * C));
  for (std::size_t py = 0; py < ph; ++py) {
    for (std::size_t px = 0; px < pw; ++px) {
      const auto row = static_cast<Eigen::Index>(py * pw + px);
      Eigen::Index col = 0;
      for (std::size_t y = 0; y < P; ++y) {
        for (std::size_t x = 0; x < P; ++x) {
          for (std::size_t c = 0; c < C; ++c) out(row, col++) = img.at(py * P + y, px * P + x, c);
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

using Index = Eigen::Index;

Index ix(std::size_t v) { return static_cast<Index>(v); }

// Weight matrices use Normal(0, 1/sqrt(fan_in)).
double fan_in_sigma(std::size_t in) { return 1.0 / std::sqrt(static_cast<double>(in)); }

void add_linear(ParamStore& s, const std::string& prefix, std::size_t in, std::size_t out,
                SplitMix64& rng) {
  s.add(prefix + ".w", ix(in), ix(out), rng, fan_in_sigma(in));
  s.add(prefix + ".b", 1, ix(out), rng, 0.0);
}

void add_ln(ParamStore& s, const std::string& prefix, std::size_t width, SplitMix64& rng) {
  s.add(prefix + ".g", 1, ix(width), rng, 0.0, 1.0);
  s.add(prefix + ".b", 1, ix(width), rng, 0.0);
}

void add_attention(ParamStore& s, const std::string& prefix, std::size_t width, SplitMix64& rng) {
  for (const char* m : {"q", "k", "v", "o"}) {
    s.add(prefix + ".w" + m, ix(width), ix(width), rng, fan_in_sigma(width));
    s.add(prefix + ".b" + m, 1, ix(width), rng, 0.0);
  }
}

void add_ffn(ParamStore& s, const std::string& prefix, std::size_t width, std::size_t hidden,
             SplitMix64& rng) {
  add_linear(s, prefix + ".fc1", width, hidden, rng);
  add_linear(s, prefix + ".fc2", hidden, width, rng);
}

}  // namespace

PhoVitModel PhoVitModel::init(PhoVitConfig cfg, EmbeddingTable table, AnswerVocab answers) {
  if (answers.size() == 0) throw std::invalid_argument("PhoVitModel: empty answer vocabulary");
  if (static_cast<std::size_t>(table.matrix().cols()) != cfg.d) {
    throw std::invalid_argument("PhoVitModel: embedding width differs from d");
  }
  cfg.n_answers = answers.size();
  cfg.check();
  PhoVitModel m{cfg, std::move(table), std::move(answers), {}};
  SplitMix64 rng(cfg.seed);
  const double s = cfg.init_sigma;
  ParamStore& p = m.params;

  p.add("embed.table", m.table.matrix());

  const std::size_t patch_dim = cfg.patch * cfg.patch * cfg.channels;
  add_linear(p, "vit.patch", patch_dim, cfg.latent, rng);
  p.add("vit.cls", 1, ix(cfg.latent), rng, s);
  p.add("vit.pos", ix(cfg.n_patches() + 1), ix(cfg.latent), rng, s);
  for (std::size_t l = 0; l < cfg.n_vit_layers; ++l) {
    const std::string pre = "vit.layer." + std::to_string(l);
    add_ln(p, pre + ".ln1", cfg.latent, rng);
    add_attention(p, pre + ".attn", cfg.latent, rng);
    add_ln(p, pre + ".ln2", cfg.latent, rng);
    add_ffn(p, pre + ".mlp", cfg.latent, cfg.ffn_hidden, rng);
  }
  add_linear(p, "vit.adapter", cfg.latent, cfg.d, rng);

  for (std::size_t k = 0; k < cfg.K; ++k) {
    const std::string pre = "da." + std::to_string(k);
    for (const char* block : {".q_sa", ".i_sa", ".i_ga"}) {
      add_ln(p, pre + block + ".ln", cfg.d, rng);
      add_attention(p, pre + block + ".attn", cfg.d, rng);
    }
    for (const char* block : {".q_ffn", ".i_ffn"}) {
      add_ln(p, pre + block + ".ln", cfg.d, rng);
      add_ffn(p, pre + block, cfg.d, cfg.ffn_hidden, rng);
    }
  }

  for (const char* stream : {"q", "i"}) {
    const std::string pre = std::string("reduce.") + stream;
    for (std::size_t l = 0; l < cfg.n_reduce_layers; ++l) {
      add_ln(p, pre + ".layer." + std::to_string(l) + ".ln", cfg.d, rng);
      add_attention(p, pre + ".layer." + std::to_string(l) + ".attn", cfg.d, rng);
    }
    p.add(pre + ".score.w", ix(cfg.d), 1, rng, fan_in_sigma(cfg.d));
  }

  p.add("fuse.wx", ix(cfg.d), ix(cfg.df), rng, fan_in_sigma(cfg.d));
  p.add("fuse.wy", ix(cfg.d), ix(cfg.df), rng, fan_in_sigma(cfg.d));
  add_ln(p, "fuse.ln", cfg.df, rng);
  add_linear(p, "vlffn.fc1", cfg.df, cfg.df, rng);
  add_linear(p, "vlffn.fc2", cfg.df, cfg.df, rng);
  add_linear(p, "out", cfg.df, cfg.n_answers, rng);
  return m;
}

Graph::Graph(Tape& tape, PhoVitModel& model)
    : tape_(&tape), model_(&model), bind_(tape, model.params) {}

// ---------------------------------------------------------------------------
// Blocks

namespace {

Var linear(const Graph& g, const std::string& prefix, const Var& x) {
  return tensor::add_row(tensor::matmul(x, g.p(prefix + ".w")), g.p(prefix + ".b"));
}

Var ln(const Graph& g, const std::string& prefix, const Var& x) {
  return tensor::layer_norm(x, g.p(prefix + ".g"), g.p(prefix + ".b"), g.cfg().ln_eps);
}

Var ffn(const Graph& g, const std::string& prefix, const Var& x) {
  return linear(g, prefix + ".fc2", tensor::gelu(linear(g, prefix + ".fc1", x)));
}

void require_width(const Var& x, std::size_t width, const char* what) {
  if (static_cast<std::size_t>(x.cols()) != width) {
    throw std::invalid_argument(std::string(what) + ": width mismatch");
  }
}

}  // namespace

Var multi_head_attention(const Graph& g, const std::string& prefix, const Var& queries,
                         const Var& keys_values) {
  auto proj = [&](const Var& x, const char* m) {
    return tensor::add_row(tensor::matmul(x, g.p(prefix + ".w" + m)), g.p(prefix + ".b" + m));
  };
  const Var Q = proj(queries, "q");
  const Var K = proj(keys_values, "k");
  const Var V = proj(keys_values, "v");
  const Index width = Q.cols();
  const Index heads = ix(g.cfg().n_heads);
  const Index dh = width / heads;
  std::vector<Var> outs;
  for (Index h = 0; h < heads; ++h) {
    const Var qh = tensor::slice_cols(Q, h * dh, dh);
    const Var kh = tensor::slice_cols(K, h * dh, dh);
    const Var vh = tensor::slice_cols(V, h * dh, dh);
    const Var scores =
        tensor::scale(tensor::matmul(qh, tensor::transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
    outs.push_back(tensor::matmul(tensor::softmax(scores, 1), vh));
  }
  const Var merged = heads == 1 ? outs.front() : tensor::concat_cols(outs);
  return proj(merged, "o");
}

Var vit_encode(const Graph& g, const Var& patches) {
  const PhoVitConfig& c = g.cfg();
  if (static_cast<std::size_t>(patches.rows()) != c.n_patches() ||
      static_cast<std::size_t>(patches.cols()) != c.patch * c.patch * c.channels) {
    throw std::invalid_argument("vit_encode: patch matrix shape mismatch");
  }
  Var x = linear(g, "vit.patch", patches);
  x = tensor::concat_rows(std::vector<Var>{g.p("vit.cls"), x});
  x = tensor::add(x, g.p("vit.pos"));
  for (std::size_t l = 0; l < c.n_vit_layers; ++l) {
    const std::string pre = "vit.layer." + std::to_string(l);
    const Var h = ln(g, pre + ".ln1", x);
    x = tensor::add(x, multi_head_attention(g, pre + ".attn", h, h));
    x = tensor::add(x, ffn(g, pre + ".mlp", ln(g, pre + ".ln2", x)));
  }
  return linear(g, "vit.adapter", x);
}

std::pair<Var, Var> da_layer(const Graph& g, std::size_t k, const Var& Q, const Var& I) {
  require_width(Q, g.cfg().d, "da_layer");
  require_width(I, g.cfg().d, "da_layer");
  const std::string pre = "da." + std::to_string(k);
  auto self_attend = [&](const std::string& block, const Var& x) {
    const Var h = ln(g, pre + block + ".ln", x);
    return tensor::add(x, multi_head_attention(g, pre + block + ".attn", h, h));
  };
  auto feed_forward = [&](const std::string& block, const Var& x) {
    return tensor::add(x, ffn(g, pre + block, ln(g, pre + block + ".ln", x)));
  };
  const Var q1 = self_attend(".q_sa", Q);
  const Var Qk = feed_forward(".q_ffn", q1);
  const Var i1 = self_attend(".i_sa", I);
  const Var i2 = tensor::add(
      i1, multi_head_attention(g, pre + ".i_ga.attn", ln(g, pre + ".i_ga.ln", i1), Qk));
  const Var Ik = feed_forward(".i_ffn", i2);
  return {Qk, Ik};
}

std::pair<Var, Var> stacked_coattention(const Graph& g, const Var& Q0, const Var& I0) {
  if (g.cfg().K == 0) throw std::invalid_argument("stacked_coattention: K must be at least 1");
  std::pair<Var, Var> state{Q0, I0};
  for (std::size_t k = 0; k < g.cfg().K; ++k) state = da_layer(g, k, state.first, state.second);
  return state;
}

Var attentional_reduce(const Graph& g, const std::string& stream, const Var& X, Var* alpha) {
  require_width(X, g.cfg().d, "attentional_reduce");
  const std::string pre = "reduce." + stream;
  Var h = X;
  for (std::size_t l = 0; l < g.cfg().n_reduce_layers; ++l) {
    const std::string lp = pre + ".layer." + std::to_string(l);
    const Var normed = ln(g, lp + ".ln", h);
    h = tensor::add(h, multi_head_attention(g, lp + ".attn", normed, normed));
  }
  const Var scores = tensor::transpose(tensor::matmul(h, g.p(pre + ".score.w")));  // 1 x t
  const Var a = tensor::softmax(scores, 1);
  if (alpha) *alpha = a;
  return tensor::matmul(a, X);
}

Var fuse_classify(const Graph& g, const Var& Qf, const Var& If, Var* logits) {
  require_width(Qf, g.cfg().d, "fuse_classify");
  require_width(If, g.cfg().d, "fuse_classify");
  const Var mixed = tensor::add(tensor::matmul(Qf, g.p("fuse.wx")), tensor::matmul(If, g.p("fuse.wy")));
  const Var z = ln(g, "fuse.ln", mixed);
  const Var v = ffn(g, "vlffn", z);
  const Var s = linear(g, "out", v);
  if (logits) *logits = s;
  return tensor::sigmoid(s);
}

Trace forward_graph(const Graph& g, const RasterImage& img, const std::string& question) {
  const PhoVitConfig& c = g.cfg();
  if (img.height != c.image_h || img.width != c.image_w) {
    throw std::invalid_argument("forward: image is " + std::to_string(img.height) + "x" +
                                std::to_string(img.width) + ", model expects " +
                                std::to_string(c.image_h) + "x" + std::to_string(c.image_w));
  }
  Trace t;
  const auto idx = question_indices(tokenize(question), g.model().table, c);
  t.question = tensor::gather_rows(g.p("embed.table"), idx);
  t.image = vit_encode(g, g.tape().leaf(patchify(img, c.patch), "patches"));
  std::tie(t.q_attended, t.i_attended) = stacked_coattention(g, t.question, t.image);
  const Var qf = attentional_reduce(g, "q", t.q_attended, &t.alpha_q);
  const Var imf = attentional_reduce(g, "i", t.i_attended, &t.alpha_i);
  t.probs = fuse_classify(g, qf, imf, &t.logits);
  return t;
}

ForwardResult forward(const RasterImage& img, const std::string& question, PhoVitModel& model) {
  Tape tape;
  Graph g(tape, model);
  const Trace t = forward_graph(g, img, question);
  ForwardResult r;
  r.probs = t.probs.value();
  r.logits = t.logits.value();
  Index best = 0;
  for (Index j = 1; j < r.probs.cols(); ++j) {
    if (r.probs(0, j) > r.probs(0, best)) best = j;
  }
  r.answer_index = static_cast<std::size_t>(best);
  r.answer = model.answers.answers().at(r.answer_index);
  return r;
}

// ---------------------------------------------------------------------------
// Training

Var sample_loss(const Graph& g, const Sample& s) {
  const Trace t = forward_graph(g, s.image, s.question);
  if (s.answer_index >= g.cfg().n_answers) throw std::invalid_argument("sample answer out of vocabulary");
  Tensor target = Tensor::Zero(1, ix(g.cfg().n_answers));
  target(0, ix(s.answer_index)) = 1.0;
  return tensor::bce(t.probs, target);
}

double train_step(const std::vector<Sample>& batch, PhoVitModel& model, double lr,
                  tensor::BceReduction reduction) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  std::vector<Tensor> grads;
  for (const auto& p : model.params.all()) grads.push_back(Tensor::Zero(p.value.rows(), p.value.cols()));
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Tape tape;
    Graph g(tape, model);
    const Var loss = sample_loss(g, batch[i]);
    const double value = loss.value()(0, 0);
    if (!std::isfinite(value)) {
      throw std::runtime_error("train_step: non-finite loss on sample " + std::to_string(i) +
                               " (question '" + batch[i].question + "')");
    }
    total += value;
    tape.backward(loss);
    g.collect_grads();
    for (std::size_t k = 0; k < grads.size(); ++k) grads[k] += model.params.all()[k].grad;
  }
  const double norm =
      reduction == tensor::BceReduction::sum ? 1.0 : 1.0 / static_cast<double>(batch.size());
  for (std::size_t k = 0; k < grads.size(); ++k) {
    auto& p = model.params.all()[k];
    p.grad = grads[k] * norm;
    if (!p.frozen) p.value -= lr * p.grad;
  }
  return total * norm;
}

// ---------------------------------------------------------------------------
// Gradient check

std::string parameter_group(const std::string& name) {
  const auto dot = name.rfind('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

bool GradCheckReport::passed() const {
  return std::all_of(group_error.begin(), group_error.end(),
                     [&](const auto& kv) { return kv.second < tol; });
}

json GradCheckReport::to_json() const {
  json j = json::object();
  for (const auto& [group, err] : group_error) j[group] = err;
  return j;
}

GradCheckReport grad_check_model(PhoVitModel& model, const Sample& sample,
                                 const GradCheckOptions& opts) {
  GradCheckReport report;
  report.tol = opts.tol;
  {
    Tape tape;
    Graph g(tape, model);
    const Var loss = sample_loss(g, sample);
    if (opts.fault_op) tape.inject_backward_fault(*opts.fault_op, opts.fault_scale);
    tape.backward(loss);
    g.collect_grads();
  }
  auto loss_value = [&]() {
    Tape tape;
    Graph g(tape, model);
    return sample_loss(g, sample).value()(0, 0);
  };
  for (auto& p : model.params.all()) {
    if (opts.frozen.count(p.name)) {
      report.notices.push_back("skipped frozen parameter " + p.name);
      continue;
    }
    const Tensor analytic = p.grad;
    Tensor numeric(p.value.rows(), p.value.cols());
    for (Index i = 0; i < p.value.size(); ++i) {
      double& v = p.value.data()[i];
      const double orig = v;
      v = orig + opts.eps;
      const double up = loss_value();
      v = orig - opts.eps;
      const double down = loss_value();
      v = orig;
      numeric.data()[i] = (up - down) / (2.0 * opts.eps);
    }
    const double err = tensor::max_relative_error(analytic, numeric);
    report.parameter_error[p.name] = err;
    double& group = report.group_error[parameter_group(p.name)];
    group = std::max(group, err);
    report.checked_scalars += static_cast<std::size_t>(p.value.size());
  }
  return report;
}

// ---------------------------------------------------------------------------
// Training probe

ColorProbe color_probe(const PhoVitConfig& cfg, std::uint64_t seed, const EmbeddingTable* table_in) {
  if (cfg.image_h != cfg.image_w) throw std::invalid_argument("color_probe needs square images");
  SplitMix64 rng(seed);
  std::vector<RasterImage> images;
  std::vector<std::string> questions, answers;
  for (std::size_t i = 0; i < kColors.size(); ++i) {
    SceneObject o;
    o.shape = kShapes[rng.uniform(kShapes.size())];
    o.color = kColors[i];
    o.material = kMaterials[rng.uniform(kMaterials.size())];
    o.size = Size::large;
    o.position = {0.3 + 0.4 * rng.uniform_real(), 0.3 + 0.4 * rng.uniform_real(), 0.0};
    Scene scene{{o}, static_cast<std::int64_t>(i)};
    QueryProgram program{{Filter{Attribute::shape, attribute_value(o, Attribute::shape)}, Unique{}},
                         QueryOp{Attribute::color}};
    images.push_back(rasterize_scene(scene, cfg.image_h));
    questions.push_back(realize_question(program, rng));
    answers.push_back(execute_program(program, scene));
  }
  AnswerVocab vocab = build_answer_vocab(answers, answers.size());
  std::vector<std::string> tokens;
  for (const auto& q : questions) {
    for (const auto& t : tokenize(q)) tokens.push_back(t);
  }
  SplitMix64 embed_rng(seed ^ 0x5eedULL);
  EmbeddingTable table =
      table_in ? *table_in : EmbeddingTable::random(tokens, cfg.d, embed_rng, cfg.init_sigma);
  PhoVitConfig model_cfg = cfg;
  model_cfg.seed = seed;
  ColorProbe probe{{}, PhoVitModel::init(model_cfg, std::move(table), vocab)};
  for (std::size_t i = 0; i < images.size(); ++i) {
    probe.batch.push_back({images[i], questions[i], *probe.model.answers.index(answers[i])});
  }
  return probe;
}

ProbeResult run_training_probe(const PhoVitConfig& cfg, std::uint64_t seed, std::size_t steps,
                               double lr, const EmbeddingTable* table) {
  ColorProbe probe = color_probe(cfg, seed, table);
  ProbeResult r;
  for (std::size_t s = 0; s < steps; ++s) r.losses.push_back(train_step(probe.batch, probe.model, lr));
  r.losses.push_back(train_step(probe.batch, probe.model, 0.0));
  return r;
}

std::vector<CheckResult> shape_suite(const PhoVitConfig& cfg, std::uint64_t seed) {
  std::vector<CheckResult> out;
  auto record = [&](std::string name, bool ok, std::string detail = "") {
    out.push_back({std::move(name), ok, std::move(detail)});
  };
  auto shape_text = [](const Var& v) {
    return std::to_string(v.rows()) + "x" + std::to_string(v.cols());
  };

  for (std::size_t K = 1; K <= 3; ++K) {
    PhoVitConfig c = cfg;
    c.K = K;
    ColorProbe probe = color_probe(c, seed);
    Tape tape;
    Graph g(tape, probe.model);
    const Trace t = forward_graph(g, probe.batch[0].image, probe.batch[0].question);
    const bool ok = t.q_attended.rows() == t.question.rows() && t.q_attended.cols() == t.question.cols() &&
                    t.i_attended.rows() == t.image.rows() && t.i_attended.cols() == t.image.cols() &&
                    static_cast<std::size_t>(t.image.rows()) == c.n_patches() + 1 &&
                    static_cast<std::size_t>(t.image.cols()) == c.d;
    record("coattention shapes K=" + std::to_string(K), ok,
           "Q " + shape_text(t.question) + " -> " + shape_text(t.q_attended) + ", I " +
               shape_text(t.image) + " -> " + shape_text(t.i_attended));
  }

  ColorProbe probe = color_probe(cfg, seed);
  {
    Tape tape;
    Graph g(tape, probe.model);
    const Trace t = forward_graph(g, probe.batch[0].image, probe.batch[0].question);
    const double sq = t.alpha_q.value().sum(), si = t.alpha_i.value().sum();
    const bool nonneg = t.alpha_q.value().minCoeff() >= 0.0 && t.alpha_i.value().minCoeff() >= 0.0;
    record("alpha sums to one", nonneg && std::abs(sq - 1.0) <= 1e-12 && std::abs(si - 1.0) <= 1e-12,
           "question " + std::to_string(sq) + ", image " + std::to_string(si));
    const Tensor& s = t.probs.value();
    record("scores in (0,1)", s.minCoeff() > 0.0 && s.maxCoeff() < 1.0,
           "min " + std::to_string(s.minCoeff()) + ", max " + std::to_string(s.maxCoeff()));
    Index a = 0, b = 0;
    s.row(0).maxCoeff(&a);
    t.logits.value().row(0).maxCoeff(&b);
    record("argmax of scores equals argmax of logits", a == b);
  }
  {
    std::string long_question;
    for (int i = 0; i < 50; ++i) long_question += (i ? " " : "") + std::string("vật");
    const auto idx = question_indices(tokenize(long_question), probe.model.table, probe.model.cfg);
    Tape tape;
    Graph g(tape, probe.model);
    const Trace t = forward_graph(g, probe.batch[0].image, long_question);
    record("question truncation", idx.size() == cfg.max_len && static_cast<std::size_t>(t.question.rows()) == cfg.max_len,
           "50 tokens -> " + std::to_string(t.question.rows()) + " rows");
  }
  {
    const ForwardResult r1 = forward(probe.batch[1].image, probe.batch[1].question, probe.model);
    ColorProbe again = color_probe(cfg, seed);
    const ForwardResult r2 = forward(again.batch[1].image, again.batch[1].question, again.model);
    record("deterministic forward", r1.probs == r2.probs && r1.answer == r2.answer);
  }
  return out;
}

}  // namespace viclevr::phovit
