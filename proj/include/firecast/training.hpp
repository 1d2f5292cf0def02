#pragma once
// Loss, SGDR schedule, plain-SGD updates with weight decay, and the training
// loop: 1:1 negative resampling per epoch, deterministic shuffles, per-epoch
// validation AUPRC, best-validation checkpoint selection.

#include "firecast/metrics.hpp"
#include "firecast/models.hpp"

namespace firecast {

struct TrainConfig {
  int epochs = 100;
  double base_lr = 0.01;
  double weight_decay = 0.001;
  std::vector<int> sgdr_cycles = {25, 75};  // must sum to epochs
  int batch_size = 64;
  uint64_t seed = 0;
  double eta_min = 0.0;
  int val_every = 1;  // validate every N epochs; 0 disables validation
  NegativePolicy negatives;

  void validate() const;
};

// Cosine annealing with warm restarts: within the cycle of length T at
// position T_cur, lr = eta_min + (base_lr - eta_min)/2 * (1 + cos(pi*T_cur/T)).
double sgdr_lr(int epoch, const TrainConfig& cfg);

// -(y ln p + (1-y) ln(1-p)) with p clamped to [1e-12, 1-1e-12]; the gradient
// flows to the score (zero where clamped).
nn::Tensor bce_loss(nn::Tape* tape, const nn::Tensor& score, double label);

// w <- w - lr * (g + weight_decay * w); plain SGD, no momentum.
void sgd_step(nn::ParamStore& params, double lr, double weight_decay);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_auprc = 0.0;
  bool has_val = false;
};

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = -1;  // epoch of the best validation AUPRC
  double best_val_auprc = 0.0;
  std::vector<std::vector<double>> best_params;
  std::vector<std::vector<double>> final_params;
};

// Deterministic in (data, config, seed). Throws NumericError when the loss
// goes non-finite. Without validation the best checkpoint is the final one.
TrainResult train(Model& model, const PreparedCube& pc, const SplitPools& pools,
                  const TrainConfig& cfg);

std::string train_log_csv_header();
std::string train_log_csv_row(const EpochLog& row);

}  // namespace firecast
