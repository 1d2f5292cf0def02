#include "firecast/models.hpp"

#include <cmath>

namespace firecast {

using nn::Tape;
using nn::Tensor;

// ---------------------------------------------------------------------------
// cells
// ---------------------------------------------------------------------------

Tensor gru_cell_step(Tape* tape, const Tensor& x, const Tensor& h_prev, const GruCellParams& p) {
  Tensor z = nn::sigmoid(tape, nn::add(tape, nn::dense(tape, x, p.wz, p.bz),
                                       nn::matmul(tape, h_prev, p.uz)));
  Tensor r = nn::sigmoid(tape, nn::add(tape, nn::dense(tape, x, p.wr, p.br),
                                       nn::matmul(tape, h_prev, p.ur)));
  Tensor cand = nn::tanh(tape, nn::add(tape, nn::dense(tape, x, p.wh, p.bh),
                                       nn::matmul(tape, nn::hadamard(tape, r, h_prev), p.uh)));
  return nn::add(tape, nn::hadamard(tape, z, h_prev),
                 nn::hadamard(tape, nn::one_minus(tape, z), cand));
}

Tensor gcn2_forward(Tape* tape, const Tensor& a_hat_norm, const Tensor& x, const Gcn2Params& p) {
  Tensor h1 = nn::relu(tape, nn::matmul(tape, nn::matmul(tape, a_hat_norm, x), p.w0));
  return nn::sigmoid(tape, nn::matmul(tape, nn::matmul(tape, a_hat_norm, h1), p.w1));
}

void validate_tgcn_params(const TgcnCellParams& p) {
  const std::vector<const Tensor*> gcn_tensors = {&p.gcn_u.w0, &p.gcn_u.w1, &p.gcn_r.w0,
                                                  &p.gcn_r.w1, &p.gcn_c.w0, &p.gcn_c.w1};
  for (size_t i = 0; i < gcn_tensors.size(); ++i) {
    for (size_t j = i + 1; j < gcn_tensors.size(); ++j) {
      if (gcn_tensors[i]->data && gcn_tensors[i]->data == gcn_tensors[j]->data) {
        throw DataError("tgcn: the three gate GCNs must not share parameters");
      }
    }
  }
}

Tensor tgcn_cell_step(Tape* tape, const Tensor& a_hat_norm, const Tensor& x_t,
                      const Tensor& h_prev, const TgcnCellParams& p) {
  Tensor gu = gcn2_forward(tape, a_hat_norm, x_t, p.gcn_u);
  Tensor gr = gcn2_forward(tape, a_hat_norm, x_t, p.gcn_r);
  Tensor gc = gcn2_forward(tape, a_hat_norm, x_t, p.gcn_c);

  Tensor u = nn::sigmoid(tape, nn::dense(tape, nn::concat_cols(tape, {gu, h_prev}), p.wu, p.bu));
  Tensor r = nn::sigmoid(tape, nn::dense(tape, nn::concat_cols(tape, {gr, h_prev}), p.wr, p.br));
  Tensor c = nn::tanh(
      tape, nn::dense(tape, nn::concat_cols(tape, {gc, nn::hadamard(tape, r, h_prev)}), p.wc, p.bc));
  return nn::add(tape, nn::hadamard(tape, u, h_prev),
                 nn::hadamard(tape, nn::one_minus(tape, u), c));
}

ConvLstmState convlstm_cell_step(Tape* tape, const Tensor& x_t, const ConvLstmState& prev,
                                 const ConvLstmCellParams& p) {
  const Tensor none;
  Tensor i = nn::sigmoid(tape, nn::add(tape, nn::conv2d_same(tape, x_t, p.wxi, p.bi),
                                       nn::conv2d_same(tape, prev.h, p.whi, none)));
  Tensor f = nn::sigmoid(tape, nn::add(tape, nn::conv2d_same(tape, x_t, p.wxf, p.bf),
                                       nn::conv2d_same(tape, prev.h, p.whf, none)));
  Tensor o = nn::sigmoid(tape, nn::add(tape, nn::conv2d_same(tape, x_t, p.wxo, p.bo),
                                       nn::conv2d_same(tape, prev.h, p.who, none)));
  Tensor g = nn::tanh(tape, nn::add(tape, nn::conv2d_same(tape, x_t, p.wxg, p.bg),
                                    nn::conv2d_same(tape, prev.h, p.whg, none)));
  ConvLstmState next;
  next.c = nn::add(tape, nn::hadamard(tape, f, prev.c), nn::hadamard(tape, i, g));
  next.h = nn::hadamard(tape, o, nn::tanh(tape, next.c));
  return next;
}

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json j;
  j["model"] = model;
  j["feature_dim"] = feature_dim;
  j["ts"] = spec.ts;
  j["h"] = spec.h;
  j["r"] = spec.r;
  j["k"] = spec.k;
  j["gru_hidden"] = gru_hidden;
  j["gru_layers"] = gru_layers;
  j["gru_dropout"] = gru_dropout;
  j["convlstm_hidden"] = convlstm_hidden;
  j["convlstm_kernel"] = convlstm_kernel;
  j["gcn_hidden"] = gcn_hidden;
  j["attn_heads"] = attn_heads;
  j["attn_dim"] = attn_dim;
  j["mlp_hidden"] = mlp_hidden;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  try {
    cfg.model = j.at("model").get<std::string>();
    cfg.feature_dim = j.at("feature_dim").get<int>();
    cfg.spec.ts = j.at("ts").get<int>();
    cfg.spec.h = j.at("h").get<int>();
    cfg.spec.r = j.at("r").get<int>();
    cfg.spec.k = j.at("k").get<int>();
    cfg.gru_hidden = j.value("gru_hidden", cfg.gru_hidden);
    cfg.gru_layers = j.value("gru_layers", cfg.gru_layers);
    cfg.gru_dropout = j.value("gru_dropout", cfg.gru_dropout);
    cfg.convlstm_hidden = j.value("convlstm_hidden", cfg.convlstm_hidden);
    cfg.convlstm_kernel = j.value("convlstm_kernel", cfg.convlstm_kernel);
    cfg.gcn_hidden = j.value("gcn_hidden", cfg.gcn_hidden);
    cfg.attn_heads = j.value("attn_heads", cfg.attn_heads);
    cfg.attn_dim = j.value("attn_dim", cfg.attn_dim);
    cfg.mlp_hidden = j.value("mlp_hidden", cfg.mlp_hidden);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed model config: " + std::string(e.what()));
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// full models
// ---------------------------------------------------------------------------

namespace {

// Constant [1,d] row for timestep j of an r=0 sample, or [n,d] vertex-feature
// matrix of a spatial one.
Tensor step_row(const Sample& s, int j) {
  const int feat = s.features.dim(1);
  Tensor x = Tensor::zeros({1, feat}, false);
  const double* src = s.features.ptr() + static_cast<size_t>(j) * feat;
  std::copy(src, src + feat, x.ptr());
  return x;
}

Tensor step_grid(const Sample& s, int j) {
  const int feat = s.features.dim(1);
  const int side = s.features.dim(2);
  Tensor x = Tensor::zeros({feat, side, side}, false);
  const double* src = s.features.ptr() + static_cast<size_t>(j) * feat * side * side;
  std::copy(src, src + static_cast<size_t>(feat) * side * side, x.ptr());
  return x;
}

Tensor step_vertices(const Sample& s, int j) {
  const int feat = s.features.dim(1);
  const int side = s.features.dim(2);
  const int n = side * side;
  Tensor x = Tensor::zeros({n, feat}, false);
  const double* src = s.features.ptr() + static_cast<size_t>(j) * feat * side * side;
  for (int f = 0; f < feat; ++f) {
    for (int v = 0; v < n; ++v) {
      x.ptr()[static_cast<size_t>(v) * feat + f] = src[static_cast<size_t>(f) * n + v];
    }
  }
  return x;
}

struct MlpHead {
  std::vector<std::pair<Tensor, Tensor>> hidden;  // (w, b) with relu
  Tensor w_out, b_out;
};

MlpHead register_mlp(nn::ParamStore& store, const std::string& prefix, int in_dim,
                     const std::vector<int>& widths, Rng& rng) {
  MlpHead head;
  int d = in_dim;
  for (size_t i = 0; i < widths.size(); ++i) {
    const int w = widths[i];
    const std::string name = prefix + std::to_string(i);
    head.hidden.emplace_back(store.add(name + ".w", {d, w}, d, rng),
                             store.add(name + ".b", {w}, d, rng));
    d = w;
  }
  head.w_out = store.add(prefix + "out.w", {d, 1}, d, rng);
  head.b_out = store.add(prefix + "out.b", {1}, d, rng);
  return head;
}

Tensor mlp_score(Tape* tape, const Tensor& x, const MlpHead& head) {
  Tensor cur = x;
  for (const auto& [w, b] : head.hidden) cur = nn::relu(tape, nn::dense(tape, cur, w, b));
  return nn::sigmoid(tape, nn::dense(tape, cur, head.w_out, head.b_out));
}

GruCellParams register_gru_cell(nn::ParamStore& store, const std::string& prefix, int in_dim,
                                int hidden, Rng& rng) {
  GruCellParams p;
  p.wz = store.add(prefix + ".wz", {in_dim, hidden}, in_dim, rng);
  p.uz = store.add(prefix + ".uz", {hidden, hidden}, hidden, rng);
  p.bz = store.add(prefix + ".bz", {hidden}, in_dim, rng);
  p.wr = store.add(prefix + ".wr", {in_dim, hidden}, in_dim, rng);
  p.ur = store.add(prefix + ".ur", {hidden, hidden}, hidden, rng);
  p.br = store.add(prefix + ".br", {hidden}, in_dim, rng);
  p.wh = store.add(prefix + ".wh", {in_dim, hidden}, in_dim, rng);
  p.uh = store.add(prefix + ".uh", {hidden, hidden}, hidden, rng);
  p.bh = store.add(prefix + ".bh", {hidden}, in_dim, rng);
  return p;
}

class GruModel final : public Model {
 public:
  GruModel(ModelConfig cfg, uint64_t init_seed) : Model(std::move(cfg)) {
    Rng rng = Rng::stream(init_seed, 0x6721);
    int in_dim = cfg_.feature_dim;
    for (int l = 0; l < cfg_.gru_layers; ++l) {
      layers_.push_back(register_gru_cell(store_, "gru" + std::to_string(l), in_dim,
                                          cfg_.gru_hidden, rng));
      in_dim = cfg_.gru_hidden;
    }
    head_w_ = store_.add("head.w", {cfg_.gru_hidden, 1}, cfg_.gru_hidden, rng);
    head_b_ = store_.add("head.b", {1}, cfg_.gru_hidden, rng);
  }

  Tensor forward(Tape* tape, const Sample& s, bool train_mode, Rng& rng) override {
    if (s.features.dim(2) != 1 || s.features.dim(3) != 1) {
      throw DataError("gru: expected r=0 features [ts][F][1][1]");
    }
    const int ts = s.features.dim(0);
    const int hidden = cfg_.gru_hidden;
    std::vector<Tensor> h(layers_.size());
    for (auto& state : h) state = Tensor::zeros({1, hidden}, false);
    for (int j = 0; j < ts; ++j) {
      Tensor x = step_row(s, j);
      for (size_t l = 0; l < layers_.size(); ++l) {
        x = gru_cell_step(tape, x, h[l], layers_[l]);
        h[l] = x;
        if (l + 1 < layers_.size()) {
          x = nn::dropout(tape, x, cfg_.gru_dropout, train_mode, rng);
        }
      }
    }
    return nn::sigmoid(tape, nn::dense(tape, h.back(), head_w_, head_b_));
  }

 private:
  std::vector<GruCellParams> layers_;
  Tensor head_w_, head_b_;
};

class ConvLstmModel final : public Model {
 public:
  ConvLstmModel(ModelConfig cfg, uint64_t init_seed) : Model(std::move(cfg)) {
    Rng rng = Rng::stream(init_seed, 0x1c57);
    const int f = cfg_.feature_dim;
    const int c = cfg_.convlstm_hidden;
    const int k = cfg_.convlstm_kernel;
    if (k % 2 == 0) throw DataError("convlstm: kernel size must be odd");
    const int fan_x = f * k * k;
    const int fan_h = c * k * k;
    auto gate = [&](const std::string& name, Tensor& wx, Tensor& wh, Tensor& b) {
      wx = store_.add("cell.wx" + name, {c, f, k, k}, fan_x, rng);
      wh = store_.add("cell.wh" + name, {c, c, k, k}, fan_h, rng);
      b = store_.add("cell.b" + name, {c}, fan_x, rng);
    };
    gate("i", cell_.wxi, cell_.whi, cell_.bi);
    gate("f", cell_.wxf, cell_.whf, cell_.bf);
    gate("o", cell_.wxo, cell_.who, cell_.bo);
    gate("g", cell_.wxg, cell_.whg, cell_.bg);
    const int side = cfg_.spec.grid();
    head_ = register_mlp(store_, "mlp", c * side * side, cfg_.mlp_hidden, rng);
  }

  Tensor forward(Tape* tape, const Sample& s, bool, Rng&) override {
    const int side = cfg_.spec.grid();
    if (s.features.dim(2) != side || s.features.dim(3) != side) {
      throw DataError("convlstm: sample grid does not match configured radius");
    }
    const int ts = s.features.dim(0);
    const int c = cfg_.convlstm_hidden;
    ConvLstmState state;
    state.h = Tensor::zeros({c, side, side}, false);
    state.c = Tensor::zeros({c, side, side}, false);
    for (int j = 0; j < ts; ++j) {
      state = convlstm_cell_step(tape, step_grid(s, j), state, cell_);
    }
    Tensor flat = nn::reshape(state.h, {1, c * side * side});
    return mlp_score(tape, flat, head_);
  }

 private:
  ConvLstmCellParams cell_;
  MlpHead head_;
};

class TgcnModel final : public Model {
 public:
  TgcnModel(ModelConfig cfg, uint64_t init_seed) : Model(std::move(cfg)) {
    Rng rng = Rng::stream(init_seed, 0x7bc3);
    const int f = cfg_.feature_dim;
    const int hid = cfg_.gcn_hidden;
    auto gcn = [&](const std::string& name) {
      Gcn2Params p;
      p.w0 = store_.add("gcn_" + name + ".w0", {f, hid}, f, rng);
      p.w1 = store_.add("gcn_" + name + ".w1", {hid, hid}, hid, rng);
      return p;
    };
    cell_.gcn_u = gcn("u");
    cell_.gcn_r = gcn("r");
    cell_.gcn_c = gcn("c");
    cell_.wu = store_.add("gate.wu", {2 * hid, hid}, 2 * hid, rng);
    cell_.bu = store_.add("gate.bu", {hid}, 2 * hid, rng);
    cell_.wr = store_.add("gate.wr", {2 * hid, hid}, 2 * hid, rng);
    cell_.br = store_.add("gate.br", {hid}, 2 * hid, rng);
    cell_.wc = store_.add("gate.wc", {2 * hid, hid}, 2 * hid, rng);
    cell_.bc = store_.add("gate.bc", {hid}, 2 * hid, rng);
    validate_tgcn_params(cell_);

    const int dm = cfg_.attn_dim;
    attn_.heads = cfg_.attn_heads;
    attn_.wq = store_.add("attn.wq", {hid, dm}, hid, rng);
    attn_.bq = store_.add("attn.bq", {dm}, hid, rng);
    attn_.wk = store_.add("attn.wk", {hid, dm}, hid, rng);
    attn_.bk = store_.add("attn.bk", {dm}, hid, rng);
    attn_.wv = store_.add("attn.wv", {hid, dm}, hid, rng);
    attn_.bv = store_.add("attn.bv", {dm}, hid, rng);
    attn_.wo = store_.add("attn.wo", {dm, dm}, dm, rng);
    attn_.bo = store_.add("attn.bo", {dm}, dm, rng);

    // Pool weights start at 1 so the readout begins as a plain mean over
    // vertices; zero-mean random weights cancel the (initially near-uniform)
    // attention output and kill the gradient into everything upstream.
    const int n = cfg_.spec.vertices();
    pool_w_ = store_.add_constant("pool.w", {1, n}, 1.0);
    head_ = register_mlp(store_, "mlp", dm, cfg_.mlp_hidden, rng);
  }

  Tensor forward(Tape* tape, const Sample& s, bool, Rng&) override {
    if (!s.graph) throw DataError("tgcn: sample carries no grid graph");
    const int n = s.graph->n;
    if (n != cfg_.spec.vertices()) throw DataError("tgcn: graph size does not match radius");
    Tensor a_hat = Tensor::values({n, n}, s.graph->a_hat_norm, false);

    const int ts = s.features.dim(0);
    Tensor h = Tensor::zeros({n, cfg_.gcn_hidden}, false);
    for (int j = 0; j < ts; ++j) {
      h = tgcn_cell_step(tape, a_hat, step_vertices(s, j), h, cell_);
    }
    Tensor attended = nn::multi_head_self_attention(tape, h, attn_);
    Tensor pooled =
        nn::scalar_mul(tape, nn::matmul(tape, pool_w_, attended), 1.0 / static_cast<double>(n));
    return mlp_score(tape, pooled, head_);
  }

 private:
  TgcnCellParams cell_;
  nn::AttentionParams attn_;
  Tensor pool_w_;
  MlpHead head_;
};

}  // namespace

std::unique_ptr<Model> make_model(const ModelConfig& cfg, uint64_t init_seed) {
  cfg.spec.validate();
  if (cfg.model == "gru") {
    if (cfg.spec.r != 0) throw UsageError("gru requires r=0");
    return std::make_unique<GruModel>(cfg, init_seed);
  }
  if (cfg.model == "convlstm") return std::make_unique<ConvLstmModel>(cfg, init_seed);
  if (cfg.model == "tgcn") return std::make_unique<TgcnModel>(cfg, init_seed);
  throw UsageError("unknown model: " + cfg.model + " (expected gru, convlstm or tgcn)");
}

void save_model(const Model& model, const std::filesystem::path& dir, const nlohmann::json& extra) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create checkpoint directory: " + dir.string());
  nlohmann::json j = extra;
  j["architecture"] = model.config().to_json();
  write_text(dir / "config.json", j.dump(2) + "\n");
  save_params(model.params(), dir / "params.bin");
}

LoadedModel load_model(const std::filesystem::path& dir) {
  const auto config_path = dir / "config.json";
  if (!std::filesystem::exists(config_path)) {
    throw DataError("missing checkpoint config: " + config_path.string());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(config_path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint config: " + std::string(e.what()));
  }
  LoadedModel loaded;
  loaded.config = j;
  loaded.model = make_model(ModelConfig::from_json(j.at("architecture")), 0);

  nn::ParamStore disk = nn::load_params(dir / "params.bin");
  nn::ParamStore& store = loaded.model->params();
  if (disk.names() != store.names()) {
    throw DataError("checkpoint parameters do not match architecture");
  }
  for (const auto& name : disk.names()) {
    nn::Tensor& dst = store.get(name);
    const nn::Tensor& src = disk.get(name);
    if (dst.shape != src.shape) throw DataError("checkpoint shape mismatch for " + name);
    *dst.data = *src.data;
  }
  return loaded;
}

std::vector<ScoredItem> score_samples_with_model(Model& model, const PreparedCube& pc,
                                                 std::span<const SampleRef> refs,
                                                 std::shared_ptr<const GridGraph> graph) {
  Rng rng(0);  // eval mode draws nothing
  std::vector<ScoredItem> out;
  out.reserve(refs.size());
  for (const SampleRef& ref : refs) {
    Sample s = extract_sample(pc, model.config().spec, ref.cell, graph);
    const double score = model.forward(nullptr, s, false, rng).value();
    out.push_back({score, ref.label});
  }
  return out;
}

}  // namespace firecast
