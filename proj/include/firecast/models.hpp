#pragma once
// The three forecasting architectures, composed from the differentiable ops:
// a two-layer GRU, a Conv-LSTM, and a T-GCN whose gate pre-activations come
// from two-layer GCNs over the sample's grid-graph. Each maps a Sample to a
// fire-probability score in (0,1).

#include <filesystem>
#include <memory>

#include <nlohmann/json.hpp>

#include "firecast/metrics.hpp"
#include "firecast/ops.hpp"
#include "firecast/param_store.hpp"
#include "firecast/sampling.hpp"

namespace firecast {

// ---- cell-level building blocks ----

struct GruCellParams {
  nn::Tensor wz, uz, bz;  // update gate: [d,H], [H,H], [H]
  nn::Tensor wr, ur, br;  // reset gate
  nn::Tensor wh, uh, bh;  // candidate
};

// Standard GRU update with the gate convention h = z*h_prev + (1-z)*cand,
// so a saturated update gate holds the previous state.
nn::Tensor gru_cell_step(nn::Tape* tape, const nn::Tensor& x, const nn::Tensor& h_prev,
                         const GruCellParams& p);

struct Gcn2Params {
  nn::Tensor w0;  // [d, h1]
  nn::Tensor w1;  // [h1, h2]
};

// sigmoid(A_hat * relu(A_hat * X * w0) * w1); no bias terms.
nn::Tensor gcn2_forward(nn::Tape* tape, const nn::Tensor& a_hat_norm, const nn::Tensor& x,
                        const Gcn2Params& p);

struct TgcnCellParams {
  Gcn2Params gcn_u, gcn_r, gcn_c;  // one independent GCN per gate
  nn::Tensor wu, bu;               // [2H, H], [H]
  nn::Tensor wr, br;
  nn::Tensor wc, bc;
};

// Throws DataError when the three GCNs share any parameter buffer.
void validate_tgcn_params(const TgcnCellParams& p);

nn::Tensor tgcn_cell_step(nn::Tape* tape, const nn::Tensor& a_hat_norm, const nn::Tensor& x_t,
                          const nn::Tensor& h_prev, const TgcnCellParams& p);

struct ConvLstmCellParams {
  nn::Tensor wxi, whi, bi;  // input gate: [C,F,k,k], [C,C,k,k], [C]
  nn::Tensor wxf, whf, bf;  // forget gate
  nn::Tensor wxo, who, bo;  // output gate
  nn::Tensor wxg, whg, bg;  // cell candidate
};

struct ConvLstmState {
  nn::Tensor h;  // [C,G,G]
  nn::Tensor c;
};

// The printed gate equations, cross-correlation for every W term, no
// peephole terms.
ConvLstmState convlstm_cell_step(nn::Tape* tape, const nn::Tensor& x_t, const ConvLstmState& prev,
                                 const ConvLstmCellParams& p);

// ---- full models ----

struct ModelConfig {
  std::string model = "gru";  // gru | convlstm | tgcn
  int feature_dim = 14;
  SampleSpec spec;
  int gru_hidden = 64;
  int gru_layers = 2;
  double gru_dropout = 0.1;
  int convlstm_hidden = 32;
  int convlstm_kernel = 3;
  int gcn_hidden = 64;
  int attn_heads = 4;
  int attn_dim = 256;
  std::vector<int> mlp_hidden = {256, 64};

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

class Model {
 public:
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {}
  virtual ~Model() = default;

  virtual nn::Tensor forward(nn::Tape* tape, const Sample& s, bool train_mode, Rng& rng) = 0;

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

 protected:
  ModelConfig cfg_;
  nn::ParamStore store_;
};

std::unique_ptr<Model> make_model(const ModelConfig& cfg, uint64_t init_seed);

// Checkpoint directory: config.json (architecture plus caller extras under
// "experiment"/"stats") next to params.bin.
void save_model(const Model& model, const std::filesystem::path& dir,
                const nlohmann::json& extra);
struct LoadedModel {
  std::unique_ptr<Model> model;
  nlohmann::json config;  // full config.json contents
};
LoadedModel load_model(const std::filesystem::path& dir);

// Eval-mode scores for a list of sample refs.
std::vector<ScoredItem> score_samples_with_model(Model& model, const PreparedCube& pc,
                                                 std::span<const SampleRef> refs,
                                                 std::shared_ptr<const GridGraph> graph);

}  // namespace firecast
