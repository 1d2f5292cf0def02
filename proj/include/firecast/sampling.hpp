#pragma once
// From datacube to model-ready samples: spatio-temporal patches, grid-graphs
// with symmetric-normalized adjacency, labels at horizon h, and the
// time-based train/val/test split.

#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "firecast/cube.hpp"
#include "firecast/tensor.hpp"

namespace firecast {

struct SampleSpec {
  int ts = 12;  // input timesteps
  int h = 1;    // forecasting horizon in 8-day periods
  int r = 0;    // spatial radius; grid side is 2r+1
  int k = 9;    // nearest-neighbor count, self included

  int grid() const { return 2 * r + 1; }
  int vertices() const { return grid() * grid(); }
  void validate() const;
};

struct GridGraph {
  int n = 1;     // vertex count, (2r+1)^2
  int side = 1;  // 2r+1
  std::vector<std::pair<int, int>> edges;  // undirected, first < second
  std::vector<double> a_hat_norm;          // dense n*n, D^{-1/2}(A+I)D^{-1/2}
  int center_index = 0;
  bool tie_split = false;  // some vertex had to split a distance shell

  double a_hat_at(int i, int j) const { return a_hat_norm[static_cast<size_t>(i) * n + j]; }
};

// Vertices on a (2r+1)x(2r+1) grid; each vertex linked to its k nearest
// neighbors by Euclidean distance on index coordinates, the vertex itself
// counting as the first of the k. Distance ties break by (row, col)
// lexicographic order. Self-loops enter once, through A_hat = A + I.
GridGraph build_grid_graph(int r, int k);

// D^{-1/2}(A+I)D^{-1/2} for a symmetric zero-diagonal 0/1 matrix; with
// with_self_loops = false the raw adjacency is normalized instead (isolated
// vertices yield zero rows). Throws on asymmetric input.
std::vector<double> normalize_adjacency(const std::vector<double>& a, int n, bool with_self_loops);

// A cube ready for sampling: standardized feature variables plus the
// binarized target. Feature order is cube order with the target excluded,
// followed by the four positional channels at extraction time.
struct PreparedCube {
  Datacube cube;
  std::vector<uint8_t> target_binary;  // [t][lat][lon]
  std::vector<std::string> feature_vars;
  std::vector<int> feature_var_idx;
  std::string target_var;
  StandardizationStats stats;

  int feature_dim() const { return static_cast<int>(feature_vars.size()) + 4; }
  uint8_t label_at(int t, int lat, int lon) const {
    return target_binary[(static_cast<long long>(t) * cube.header.lat_len + lat) *
                             cube.header.lon_len + lon];
  }
};

// Standardizes every non-target variable with stats over [train_t_begin,
// train_t_end) and binarizes the target.
PreparedCube prepare_cube(Datacube cube, const std::string& target_var, int train_t_begin,
                          int train_t_end);

struct Sample {
  nn::Tensor features;  // [ts, F, 2r+1, 2r+1], constant
  int label = 0;
  CellTime origin;
  std::shared_ptr<const GridGraph> graph;  // attached for T-GCN samples
};

// Features end at cell.t_idx; the label is the binarized target at horizon h.
// Longitude wraps when the cube spans 360 degrees, otherwise out-of-domain
// cells zero-fill (latitude always zero-fills).
Sample extract_sample(const PreparedCube& pc, const SampleSpec& spec, const CellTime& cell,
                      std::shared_ptr<const GridGraph> graph = nullptr);

struct SplitSpec {
  std::set<int> train_years;
  std::set<int> val_years;
  std::set<int> test_years;
  void validate() const;  // disjointness
};

struct SampleRef {
  CellTime cell;
  uint8_t label = 0;
};

struct NegativePolicy {
  enum class Kind { KeepAll, Ratio };
  Kind kind = Kind::Ratio;
  double ratio = 1.0;             // negatives per positive
  long long max_positives = -1;   // optional cap for desk-scale runs, -1 = all
};

// Full per-split pools. A sample belongs to the split containing the year of
// its label timestep; train/val/test are disjoint by construction.
struct SplitPools {
  std::vector<SampleRef> train_pos;
  std::vector<SampleRef> train_neg;
  std::vector<SampleRef> val;
  std::vector<SampleRef> test;
};

SplitPools enumerate_split_pools(const PreparedCube& pc, const SampleSpec& spec,
                                 const SplitSpec& split);

// One epoch's training list under the negative-subsampling policy.
std::vector<SampleRef> apply_negative_policy(const SplitPools& pools, const NegativePolicy& policy,
                                             Rng& rng);

struct EnumeratedSamples {
  std::vector<SampleRef> train;
  std::vector<SampleRef> val;
  std::vector<SampleRef> test;
};

// Deterministic for a fixed seed; training negatives subsampled per policy,
// val/test exhaustive over masked cells.
EnumeratedSamples enumerate_samples(const PreparedCube& pc, const SampleSpec& spec,
                                    const SplitSpec& split, const NegativePolicy& policy,
                                    uint64_t seed);

}  // namespace firecast
