#include "viclevr/tensor.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "viclevr/error.hpp"

namespace viclevr::tensor {

// ---------------------------------------------------------------------------
// Parameters

Parameter& ParamStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                           SplitMix64& rng, double sigma, double fill) {
  Tensor value(rows, cols);
  for (Eigen::Index i = 0; i < value.size(); ++i) {
    value.data()[i] = sigma > 0.0 ? sigma * rng.normal() : fill;
  }
  return add(name, std::move(value));
}

Parameter& ParamStore::add(const std::string& name, Tensor value) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
  index_[name] = params_.size();
  Parameter p;
  p.name = name;
  p.grad = Tensor::Zero(value.rows(), value.cols());
  p.value = std::move(value);
  params_.push_back(std::move(p));
  return params_.back();
}

Parameter& ParamStore::at(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
  return params_[it->second];
}

const Parameter& ParamStore::at(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
  return params_[it->second];
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

Binding::Binding(Tape<double>& tape, ParamStore& store) : tape_(&tape), store_(&store) {
  for (const auto& p : store.all()) ids_[p.name] = tape.leaf(p.value, "param:" + p.name).id;
}

Var<double> Binding::operator[](const std::string& name) const {
  const auto it = ids_.find(name);
  if (it == ids_.end()) throw std::out_of_range("unknown parameter " + name);
  return {tape_, it->second};
}

void Binding::collect_grads() const {
  for (auto& p : store_->all()) p.grad = tape_->grad(ids_.at(p.name));
}

// ---------------------------------------------------------------------------
// Gradient checking

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  Tensor g(x.rows(), x.cols());
  Tensor probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + eps;
    const double up = f(probe);
    probe.data()[i] = orig - eps;
    const double down = f(probe);
    probe.data()[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::domain_error("finite_diff_grad: non-finite function value");
    }
    g.data()[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

double max_relative_error(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("max_relative_error: shape mismatch");
  }
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double x = a.data()[i], y = b.data()[i];
    worst = std::max(worst, std::abs(x - y) / std::max({1.0, std::abs(x), std::abs(y)}));
  }
  return worst;
}

namespace {

Tensor random_tensor(SplitMix64& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = lo + (hi - lo) * rng.uniform_real();
  return t;
}

Eigen::Index dim(SplitMix64& rng, Eigen::Index lo = 1, Eigen::Index hi = 5) {
  return lo + static_cast<Eigen::Index>(rng.uniform(static_cast<std::uint64_t>(hi - lo + 1)));
}

using Inputs = std::vector<Tensor>;
using Vars = std::vector<Var<double>>;

std::vector<PrimitiveCase> build_registry() {
  std::vector<PrimitiveCase> r;
  r.push_back({"matmul", "dA = dC·Bᵀ, dB = Aᵀ·dC",
               [](SplitMix64& g) {
                 const auto m = dim(g), k = dim(g), n = dim(g);
                 return Inputs{random_tensor(g, m, k), random_tensor(g, k, n)};
               },
               [](Tape<double>&, const Vars& v) { return matmul(v[0], v[1]); }});
  r.push_back({"add", "dA = dC, dB = dC",
               [](SplitMix64& g) {
                 const auto m = dim(g), n = dim(g);
                 return Inputs{random_tensor(g, m, n), random_tensor(g, m, n)};
               },
               [](Tape<double>&, const Vars& v) { return add(v[0], v[1]); }});
  r.push_back({"add_row", "dA = dC, db = Σ_rows dC",
               [](SplitMix64& g) {
                 const auto m = dim(g), n = dim(g);
                 return Inputs{random_tensor(g, m, n), random_tensor(g, 1, n)};
               },
               [](Tape<double>&, const Vars& v) { return add_row(v[0], v[1]); }});
  r.push_back({"mul", "dA = dC ⊙ B, dB = dC ⊙ A",
               [](SplitMix64& g) {
                 const auto m = dim(g), n = dim(g);
                 return Inputs{random_tensor(g, m, n), random_tensor(g, m, n)};
               },
               [](Tape<double>&, const Vars& v) { return mul(v[0], v[1]); }});
  r.push_back({"scale", "dA = s·dC",
               [](SplitMix64& g) { return Inputs{random_tensor(g, dim(g), dim(g))}; },
               [](Tape<double>&, const Vars& v) { return scale(v[0], -1.7); }});
  r.push_back({"transpose", "dA = dCᵀ",
               [](SplitMix64& g) { return Inputs{random_tensor(g, dim(g), dim(g))}; },
               [](Tape<double>&, const Vars& v) { return transpose(v[0]); }});
  r.push_back({"reshape", "dA = reshape(dC, shape(A))",
               [](SplitMix64& g) { return Inputs{random_tensor(g, 2 * dim(g), 3)}; },
               [](Tape<double>&, const Vars& v) { return reshape(v[0], 3, v[0].rows()); }});
  r.push_back({"concat_rows", "row blocks of dC",
               [](SplitMix64& g) {
                 const auto n = dim(g);
                 return Inputs{random_tensor(g, dim(g), n), random_tensor(g, dim(g), n)};
               },
               [](Tape<double>&, const Vars& v) { return concat_rows(Vars{v[0], v[1], v[0]}); }});
  r.push_back({"concat_cols", "column blocks of dC",
               [](SplitMix64& g) {
                 const auto m = dim(g);
                 return Inputs{random_tensor(g, m, dim(g)), random_tensor(g, m, dim(g))};
               },
               [](Tape<double>&, const Vars& v) { return concat_cols(Vars{v[0], v[1]}); }});
  r.push_back({"slice_cols", "dC placed in the sliced columns, zero elsewhere",
               [](SplitMix64& g) { return Inputs{random_tensor(g, dim(g), dim(g, 2, 6))}; },
               [](Tape<double>&, const Vars& v) { return slice_cols(v[0], 1, v[0].cols() - 1); }});
  r.push_back({"gather_rows", "rows of dC scatter-added into the table",
               [](SplitMix64& g) { return Inputs{random_tensor(g, dim(g, 2, 5), dim(g))}; },
               [](Tape<double>&, const Vars& v) {
                 const auto last = static_cast<std::size_t>(v[0].rows() - 1);
                 return gather_rows(v[0], {last, 0, last, 1});
               }});
  r.push_back({"gelu", "dA = dC ⊙ (Φ(x) + x·φ(x))",
               [](SplitMix64& g) { return Inputs{random_tensor(g, dim(g), dim(g), -3.0, 3.0)}; },
               [](Tape<double>&, const Vars& v) { return gelu(v[0]); }});
  r.push_back({"softmax", "dA = y ⊙ (dC − Σ_axis dC ⊙ y)",
               [](SplitMix64& g) { return Inputs{random_tensor(g, dim(g), dim(g), -3.0, 3.0)}; },
               [](Tape<double>&, const Vars& v) { return softmax(v[0], 1); }});
  r.push_back({"softmax_axis0", "dA = y ⊙ (dC − Σ_axis dC ⊙ y)",
               [](SplitMix64& g) { return Inputs{random_tensor(g, dim(g), dim(g), -3.0, 3.0)}; },
               [](Tape<double>&, const Vars& v) { return softmax(v[0], 0); }});
  r.push_back({"layer_norm", "dx = (dx̂ − mean dx̂ − x̂·mean(dx̂ ⊙ x̂))/σ, dg = Σ dC ⊙ x̂, db = Σ dC",
               [](SplitMix64& g) {
                 const auto m = dim(g), n = dim(g, 2, 6);
                 return Inputs{random_tensor(g, m, n, -2.0, 2.0), random_tensor(g, 1, n, 0.5, 1.5),
                               random_tensor(g, 1, n)};
               },
               [](Tape<double>&, const Vars& v) { return layer_norm(v[0], v[1], v[2], 1e-5); }});
  r.push_back({"sigmoid", "dA = dC ⊙ y(1 − y)",
               [](SplitMix64& g) { return Inputs{random_tensor(g, dim(g), dim(g), -4.0, 4.0)}; },
               [](Tape<double>&, const Vars& v) { return sigmoid(v[0]); }});
  r.push_back({"mean_rows", "dA = dC / rows broadcast",
               [](SplitMix64& g) { return Inputs{random_tensor(g, dim(g), dim(g))}; },
               [](Tape<double>&, const Vars& v) { return mean_rows(v[0]); }});
  r.push_back({"sum_all", "dA = dC broadcast",
               [](SplitMix64& g) { return Inputs{random_tensor(g, dim(g), dim(g))}; },
               [](Tape<double>&, const Vars& v) { return sum_all(v[0]); }});
  r.push_back({"bce", "dẑ = (ẑ − z)/(ẑ(1 − ẑ)) inside the clamp, 0 outside",
               [](SplitMix64& g) {
                 const auto m = dim(g), n = dim(g);
                 Tensor target(m, n);
                 for (Eigen::Index i = 0; i < target.size(); ++i) {
                   target.data()[i] = static_cast<double>(g.uniform(2));
                 }
                 return Inputs{random_tensor(g, m, n, 0.05, 0.95), target};
               },
               [](Tape<double>&, const Vars& v) { return bce(v[0], v[1].value()); }});
  return r;
}

}  // namespace

const std::vector<PrimitiveCase>& primitive_registry() {
  static const std::vector<PrimitiveCase> registry = build_registry();
  return registry;
}

double check_primitive(const PrimitiveCase& c, SplitMix64& rng, std::size_t trials, double eps) {
  double worst = 0.0;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const Inputs inputs = c.make_inputs(rng);
    Tensor weights;
    auto loss_at = [&](const Inputs& xs, Tape<double>& tape, std::vector<Var<double>>& vars) {
      vars.clear();
      for (const auto& x : xs) vars.push_back(tape.leaf(x));
      const Var<double> out = c.apply(tape, vars);
      if (weights.size() == 0) weights = random_tensor(rng, out.rows(), out.cols());
      return sum_all(mul(out, tape.leaf(weights)));
    };
    Tape<double> tape;
    std::vector<Var<double>> vars;
    const Var<double> loss = loss_at(inputs, tape, vars);
    tape.backward(loss);
    // The bce target (second input) is a constant; it is not differentiated.
    const std::size_t n_diff = c.name == "bce" ? 1 : inputs.size();
    for (std::size_t k = 0; k < n_diff; ++k) {
      const Tensor analytic = vars[k].grad();
      const Tensor numeric = finite_diff_grad(
          [&](const Tensor& x) {
            Inputs xs = inputs;
            xs[k] = x;
            Tape<double> t;
            std::vector<Var<double>> vs;
            return loss_at(xs, t, vs).value()(0, 0);
          },
          inputs[k], eps);
      worst = std::max(worst, max_relative_error(analytic, numeric));
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

std::string blob_name(std::size_t index) { return "param_" + std::to_string(index) + ".bin"; }

void write_blob(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(t.data()[i]);
    unsigned char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
  if (!out) throw Error("short write to " + path.string());
}

Tensor read_blob(const std::filesystem::path& path, Eigen::Index rows, Eigen::Index cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
      throw SchemaError(path.string(), "blob shorter than its manifest shape");
    }
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    t.data()[i] = std::bit_cast<double>(bits);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw SchemaError(path.string(), "blob longer than its manifest shape");
  }
  return t;
}

}  // namespace

void save_checkpoint(const ParamStore& store, std::uint64_t seed, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json params = nlohmann::json::array();
  for (std::size_t i = 0; i < store.all().size(); ++i) {
    const Parameter& p = store.all()[i];
    params.push_back({{"name", p.name},
                      {"shape", {p.value.rows(), p.value.cols()}},
                      {"file", blob_name(i)},
                      {"frozen", p.frozen}});
    write_blob(dir / blob_name(i), p.value);
  }
  const nlohmann::json manifest = {{"seed", seed}, {"dtype", "f64-le"}, {"parameters", params}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw Error("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
}

ParamStore load_checkpoint(const std::filesystem::path& dir, std::uint64_t* seed) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw Error("cannot read " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest.json: ") + e.what());
  }
  ParamStore store;
  try {
    if (seed) *seed = manifest.at("seed").get<std::uint64_t>();
    for (const auto& e : manifest.at("parameters")) {
      const auto rows = e.at("shape").at(0).get<Eigen::Index>();
      const auto cols = e.at("shape").at(1).get<Eigen::Index>();
      Parameter& p = store.add(e.at("name").get<std::string>(),
                               read_blob(dir / e.at("file").get<std::string>(), rows, cols));
      p.frozen = e.value("frozen", false);
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("manifest.json", e.what());
  }
  return store;
}

}  // namespace viclevr::tensor
