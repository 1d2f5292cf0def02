#pragma once
// Average precision (AUPRC) and the two naive seasonal baselines.

#include <span>
#include <string>
#include <vector>

#include "firecast/sampling.hpp"

namespace firecast {

struct ScoredItem {
  double score = 0.0;
  int label = 0;
};

// Recall-weighted mean of precisions over descending score thresholds; tied
// scores form a single threshold block. Throws DataError when the set is
// empty or has no positive.
double average_precision(std::vector<ScoredItem> items);

// history[year][period] holds the binarized fire record, oldest year first.
// Both baselines look at rows strictly before target_year (which must be
// >= 1) in the same period.
int naive_any_baseline(const std::vector<std::vector<uint8_t>>& history, int target_year,
                       int period);
// Fires strictly outnumbering no-fire years predict 1; ties predict 0.
int naive_majority_baseline(const std::vector<std::vector<uint8_t>>& history, int target_year,
                            int period);

enum class Baseline { Any, Majority };
Baseline baseline_from_name(const std::string& name);  // "naive-any" | "naive-majority"
std::string baseline_name(Baseline b);

// Binary 0/1 scores for eval samples: each sample's label timestep is judged
// from the same 8-day period of all preceding cube years at that cell.
std::vector<ScoredItem> score_samples_with_baseline(Baseline b, const PreparedCube& pc,
                                                    const SampleSpec& spec,
                                                    std::span<const SampleRef> refs);

struct EvalMeta {
  std::string model;  // architecture or baseline name
  int ts = 0;
  int h = 0;
  int r = 0;
  int k = 0;
  std::string split;
  uint64_t seed = 0;
};

struct EvalReport {
  EvalMeta meta;
  double auprc = 0.0;
  long long n_pos = 0;
  long long n_neg = 0;
  std::string status = "ok";
};

EvalReport evaluate_scored(const EvalMeta& meta, const std::vector<ScoredItem>& scored);

std::string eval_csv_header();
std::string eval_csv_row(const EvalReport& report);

}  // namespace firecast
