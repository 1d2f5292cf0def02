#include "firecast/sampling.hpp"

#include <algorithm>
#include <cmath>

namespace firecast {

void SampleSpec::validate() const {
  if (ts < 1) throw DataError("sample spec: ts must be >= 1");
  if (h < 1) throw DataError("sample spec: h must be >= 1");
  if (r < 0) throw DataError("sample spec: r must be >= 0");
  if (k < 1 || k > vertices()) throw DataError("sample spec: k out of range");
}

void SplitSpec::validate() const {
  for (int y : train_years) {
    if (val_years.count(y) || test_years.count(y)) throw DataError("split years not disjoint");
  }
  for (int y : val_years) {
    if (test_years.count(y)) throw DataError("split years not disjoint");
  }
}

// ---------------------------------------------------------------------------
// grid graph
// ---------------------------------------------------------------------------

std::vector<double> normalize_adjacency(const std::vector<double>& a, int n,
                                        bool with_self_loops) {
  if (static_cast<long long>(a.size()) != static_cast<long long>(n) * n) {
    throw DataError("normalize_adjacency: matrix size mismatch");
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (a[static_cast<size_t>(i) * n + j] != a[static_cast<size_t>(j) * n + i]) {
        throw DataError("normalize_adjacency: asymmetric input");
      }
    }
  }
  std::vector<double> a_hat = a;
  if (with_self_loops) {
    for (int i = 0; i < n; ++i) a_hat[static_cast<size_t>(i) * n + i] += 1.0;
  }
  std::vector<double> inv_sqrt_deg(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    double deg = 0.0;
    for (int j = 0; j < n; ++j) deg += a_hat[static_cast<size_t>(i) * n + j];
    inv_sqrt_deg[static_cast<size_t>(i)] = deg > 0.0 ? 1.0 / std::sqrt(deg) : 0.0;
  }
  std::vector<double> out(a_hat.size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      out[static_cast<size_t>(i) * n + j] = inv_sqrt_deg[static_cast<size_t>(i)] *
                                            a_hat[static_cast<size_t>(i) * n + j] *
                                            inv_sqrt_deg[static_cast<size_t>(j)];
    }
  }
  return out;
}

GridGraph build_grid_graph(int r, int k) {
  if (r < 0) throw DataError("build_grid_graph: r must be >= 0");
  const int side = 2 * r + 1;
  const int n = side * side;
  if (k < 1 || k > n) throw DataError("build_grid_graph: k out of range");

  GridGraph g;
  g.side = side;
  g.n = n;
  g.center_index = r * side + r;

  // Candidate list per vertex sorted by (squared distance, row, col); the
  // vertex itself sits first at distance 0 and counts toward k.
  std::set<std::pair<int, int>> edge_set;
  for (int row = 0; row < side; ++row) {
    for (int col = 0; col < side; ++col) {
      const int v = row * side + col;
      struct Cand {
        int d2, row, col;
      };
      std::vector<Cand> cands;
      cands.reserve(static_cast<size_t>(n));
      for (int rr = 0; rr < side; ++rr) {
        for (int cc = 0; cc < side; ++cc) {
          const int d2 = (rr - row) * (rr - row) + (cc - col) * (cc - col);
          cands.push_back({d2, rr, cc});
        }
      }
      std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.d2 != b.d2) return a.d2 < b.d2;
        if (a.row != b.row) return a.row < b.row;
        return a.col < b.col;
      });
      // cands[0] is the vertex itself; spatial neighbors are cands[1..k).
      if (k < n && cands[static_cast<size_t>(k - 1)].d2 == cands[static_cast<size_t>(k)].d2) {
        g.tie_split = true;
      }
      for (int i = 1; i < k; ++i) {
        const int u = cands[static_cast<size_t>(i)].row * side + cands[static_cast<size_t>(i)].col;
        edge_set.insert({std::min(u, v), std::max(u, v)});
      }
    }
  }
  g.edges.assign(edge_set.begin(), edge_set.end());

  std::vector<double> a(static_cast<size_t>(n) * n, 0.0);
  for (const auto& [u, v] : g.edges) {
    a[static_cast<size_t>(u) * n + v] = 1.0;
    a[static_cast<size_t>(v) * n + u] = 1.0;
  }
  g.a_hat_norm = normalize_adjacency(a, n, true);
  return g;
}

// ---------------------------------------------------------------------------
// prepared cube
// ---------------------------------------------------------------------------

PreparedCube prepare_cube(Datacube cube, const std::string& target_var, int train_t_begin,
                          int train_t_end) {
  if (cube.header.var_index(target_var) < 0) {
    throw DataError("prepare_cube: target variable not in cube: " + target_var);
  }
  PreparedCube pc;
  for (const auto& v : cube.header.variables) {
    if (v.name == target_var) continue;
    pc.feature_vars.push_back(v.name);
  }
  pc.target_var = target_var;
  pc.stats = compute_standardization(cube, train_t_begin, train_t_end, pc.feature_vars);
  pc.target_binary = binarize_target(cube, target_var);
  pc.cube = standardize(cube, pc.stats, pc.feature_vars);
  for (const auto& name : pc.feature_vars) {
    pc.feature_var_idx.push_back(pc.cube.header.var_index(name));
  }
  return pc;
}

// ---------------------------------------------------------------------------
// sample extraction
// ---------------------------------------------------------------------------

Sample extract_sample(const PreparedCube& pc, const SampleSpec& spec, const CellTime& cell,
                      std::shared_ptr<const GridGraph> graph) {
  const CubeHeader& h = pc.cube.header;
  if (cell.lat_idx < 0 || cell.lat_idx >= h.lat_len || cell.lon_idx < 0 ||
      cell.lon_idx >= h.lon_len) {
    throw DataError("extract_sample: cell out of range");
  }
  if (cell.t_idx - spec.ts + 1 < 0 || cell.t_idx + spec.h >= h.time_len) {
    throw DataError("extract_sample: time out of range");
  }
  if (pc.cube.mask_at(cell.lat_idx, cell.lon_idx) == 0) {
    throw DataError("extract_sample: center cell off mask");
  }

  const int side = spec.grid();
  const int n_vars = static_cast<int>(pc.feature_var_idx.size());
  const int feat = n_vars + 4;
  const bool wraps = h.lon_wraps();

  Sample s;
  s.origin = cell;
  s.label = pc.label_at(cell.t_idx + spec.h, cell.lat_idx, cell.lon_idx);
  s.graph = std::move(graph);
  s.features = nn::Tensor::zeros({spec.ts, feat, side, side}, false);

  double* out = s.features.ptr();
  const auto plane_at = [&](int f, int j, int gy, int gx) -> double& {
    return out[((static_cast<size_t>(j) * feat + f) * side + gy) * side + gx];
  };

  for (int gy = 0; gy < side; ++gy) {
    const int lat = cell.lat_idx - spec.r + gy;
    const bool lat_ok = lat >= 0 && lat < h.lat_len;
    for (int gx = 0; gx < side; ++gx) {
      int lon = cell.lon_idx - spec.r + gx;
      bool lon_ok = lon >= 0 && lon < h.lon_len;
      if (!lon_ok && wraps) {
        lon = ((lon % h.lon_len) + h.lon_len) % h.lon_len;
        lon_ok = true;
      }
      if (!lat_ok || !lon_ok) continue;  // zero-filled
      const auto pos = positional_encoding(h, lat, lon);
      for (int j = 0; j < spec.ts; ++j) {
        const int t = cell.t_idx - spec.ts + 1 + j;
        for (int f = 0; f < n_vars; ++f) {
          plane_at(f, j, gy, gx) =
              static_cast<double>(pc.cube.at(pc.feature_var_idx[static_cast<size_t>(f)], t, lat, lon));
        }
        for (int p = 0; p < 4; ++p) plane_at(n_vars + p, j, gy, gx) = pos[static_cast<size_t>(p)];
      }
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// enumeration and split
// ---------------------------------------------------------------------------

SplitPools enumerate_split_pools(const PreparedCube& pc, const SampleSpec& spec,
                                 const SplitSpec& split) {
  spec.validate();
  split.validate();
  const CubeHeader& h = pc.cube.header;

  SplitPools pools;
  for (int lat = 0; lat < h.lat_len; ++lat) {
    for (int lon = 0; lon < h.lon_len; ++lon) {
      if (pc.cube.mask_at(lat, lon) == 0) continue;
      for (int t = spec.ts - 1; t + spec.h < h.time_len; ++t) {
        const int label_year = time_to_year(h, t + spec.h);
        SampleRef ref;
        ref.cell = {lat, lon, t};
        ref.label = pc.label_at(t + spec.h, lat, lon);
        if (split.train_years.count(label_year)) {
          (ref.label ? pools.train_pos : pools.train_neg).push_back(ref);
        } else if (split.val_years.count(label_year)) {
          pools.val.push_back(ref);
        } else if (split.test_years.count(label_year)) {
          pools.test.push_back(ref);
        }
      }
    }
  }
  return pools;
}

std::vector<SampleRef> apply_negative_policy(const SplitPools& pools, const NegativePolicy& policy,
                                             Rng& rng) {
  std::vector<SampleRef> pos = pools.train_pos;
  if (policy.max_positives >= 0 && static_cast<long long>(pos.size()) > policy.max_positives) {
    rng.shuffle(pos);
    pos.resize(static_cast<size_t>(policy.max_positives));
  }
  std::vector<SampleRef> out = pos;
  if (policy.kind == NegativePolicy::Kind::KeepAll) {
    out.insert(out.end(), pools.train_neg.begin(), pools.train_neg.end());
    return out;
  }
  const auto want = static_cast<long long>(static_cast<double>(pos.size()) * policy.ratio + 0.5);
  if (static_cast<long long>(pools.train_neg.size()) <= want) {
    out.insert(out.end(), pools.train_neg.begin(), pools.train_neg.end());
    return out;
  }
  std::vector<SampleRef> neg = pools.train_neg;
  rng.shuffle(neg);
  out.insert(out.end(), neg.begin(), neg.begin() + static_cast<ptrdiff_t>(want));
  return out;
}

EnumeratedSamples enumerate_samples(const PreparedCube& pc, const SampleSpec& spec,
                                    const SplitSpec& split, const NegativePolicy& policy,
                                    uint64_t seed) {
  SplitPools pools = enumerate_split_pools(pc, spec, split);
  if (pools.train_pos.empty() && pools.train_neg.empty() && pools.val.empty() &&
      pools.test.empty()) {
    throw DataError("enumerate_samples: no samples in any split");
  }
  Rng rng = Rng::stream(seed, 0x5a17);
  EnumeratedSamples out;
  out.train = apply_negative_policy(pools, policy, rng);
  out.val = std::move(pools.val);
  out.test = std::move(pools.test);
  return out;
}

}  // namespace firecast
