#include "firecast/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace firecast {

using nn::Tape;
using nn::Tensor;

void TrainConfig::validate() const {
  if (epochs < 1) throw DataError("train config: epochs must be >= 1");
  // lr = 0 is degenerate but allowed; it freezes the parameters, which the
  // determinism tests rely on.
  if (base_lr < 0.0) throw DataError("train config: base_lr must be >= 0");
  if (batch_size < 1) throw DataError("train config: batch_size must be >= 1");
  if (sgdr_cycles.empty()) throw DataError("train config: empty SGDR cycle list");
  int total = 0;
  for (int c : sgdr_cycles) {
    if (c < 1) throw DataError("train config: cycle lengths must be >= 1");
    total += c;
  }
  if (total != epochs) throw DataError("train config: SGDR cycles must sum to epochs");
}

double sgdr_lr(int epoch, const TrainConfig& cfg) {
  int start = 0;
  for (int t_i : cfg.sgdr_cycles) {
    if (epoch < start + t_i) {
      const int t_cur = epoch - start;
      return cfg.eta_min +
             0.5 * (cfg.base_lr - cfg.eta_min) *
                 (1.0 + std::cos(std::numbers::pi * t_cur / t_i));
    }
    start += t_i;
  }
  throw DataError("sgdr_lr: epoch out of schedule range");
}

Tensor bce_loss(Tape* tape, const Tensor& score, double label) {
  if (score.numel() != 1) throw nn::ShapeError("bce_loss: score must be scalar");
  constexpr double eps = 1e-12;
  const double raw = (*score.data)[0];
  const double p = std::clamp(raw, eps, 1.0 - eps);
  const double loss = -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));

  const bool tracked = tape && score.has_grad();
  Tensor out = Tensor::zeros({1}, tracked);
  (*out.data)[0] = loss;
  if (tracked) {
    const double dloss_dp = (raw > eps && raw < 1.0 - eps) ? (p - label) / (p * (1.0 - p)) : 0.0;
    tape->record([sg = score.grad, og = out.grad, dloss_dp] {
      (*sg)[0] += (*og)[0] * dloss_dp;
    });
  }
  return out;
}

void sgd_step(nn::ParamStore& params, double lr, double weight_decay) {
  for (const auto& name : params.names()) {
    Tensor& t = params.get(name);
    if (!t.has_grad()) throw DataError("sgd_step: parameter without gradients: " + name);
    double* w = t.ptr();
    const double* g = t.gptr();
    const auto n = static_cast<size_t>(t.numel());
    for (size_t i = 0; i < n; ++i) w[i] -= lr * (g[i] + weight_decay * w[i]);
  }
}

TrainResult train(Model& model, const PreparedCube& pc, const SplitPools& pools,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (pools.train_pos.empty() && pools.train_neg.empty()) {
    throw DataError("train: empty training set");
  }
  const SampleSpec& spec = model.config().spec;
  std::shared_ptr<const GridGraph> graph;
  if (model.config().model == "tgcn") {
    graph = std::make_shared<GridGraph>(build_grid_graph(spec.r, spec.k));
  }

  TrainResult result;
  Tape tape;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = sgdr_lr(epoch, cfg);

    Rng epoch_rng = Rng::stream(cfg.seed, 0xe90c, static_cast<uint64_t>(epoch));
    std::vector<SampleRef> list = apply_negative_policy(pools, cfg.negatives, epoch_rng);
    epoch_rng.shuffle(list);
    if (list.empty()) throw DataError("train: negative policy produced an empty epoch");

    double loss_sum = 0.0;
    size_t cursor = 0;
    while (cursor < list.size()) {
      const size_t batch_n = std::min(static_cast<size_t>(cfg.batch_size), list.size() - cursor);
      model.params().zero_grads();
      for (size_t b = 0; b < batch_n; ++b) {
        const SampleRef& ref = list[cursor + b];
        Sample sample = extract_sample(pc, spec, ref.cell, graph);
        tape.clear();
        Rng sample_rng = Rng::stream(cfg.seed, static_cast<uint64_t>(epoch) * 0x10001u + 7,
                                     static_cast<uint64_t>(cursor + b));
        Tensor score = model.forward(&tape, sample, true, sample_rng);
        Tensor loss = bce_loss(&tape, score, static_cast<double>(ref.label));
        const double loss_value = loss.value();
        if (!std::isfinite(loss_value)) {
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
        }
        tape.backward(loss, 1.0 / static_cast<double>(batch_n));
        loss_sum += loss_value;
      }
      sgd_step(model.params(), lr, cfg.weight_decay);
      cursor += batch_n;
    }

    EpochLog row;
    row.epoch = epoch;
    row.lr = lr;
    row.train_loss = loss_sum / static_cast<double>(list.size());
    if (!std::isfinite(row.train_loss)) {
      throw NumericError("train: non-finite epoch loss at epoch " + std::to_string(epoch));
    }

    const bool run_val = cfg.val_every > 0 && !pools.val.empty() &&
                         ((epoch + 1) % cfg.val_every == 0 || epoch + 1 == cfg.epochs);
    if (run_val) {
      auto scored = score_samples_with_model(model, pc, pools.val, graph);
      row.val_auprc = average_precision(scored);
      row.has_val = true;
      if (result.best_epoch < 0 || row.val_auprc > result.best_val_auprc) {
        result.best_epoch = epoch;
        result.best_val_auprc = row.val_auprc;
        result.best_params = model.params().snapshot();
      }
    }
    result.log.push_back(row);
  }

  result.final_params = model.params().snapshot();
  if (result.best_epoch < 0) {
    result.best_epoch = cfg.epochs - 1;
    result.best_params = result.final_params;
  }
  return result;
}

std::string train_log_csv_header() { return "epoch,lr,train_loss,val_auprc"; }

std::string train_log_csv_row(const EpochLog& row) {
  std::string out = std::to_string(row.epoch);
  out += "," + fmt_g17(row.lr);
  out += "," + fmt_g17(row.train_loss);
  out += ",";
  if (row.has_val) out += fmt_g17(row.val_auprc);
  return out;
}

}  // namespace firecast
