#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "firecast/grad_check.hpp"
#include "firecast/models.hpp"
#include "firecast/training.hpp"
#include "test_util.hpp"

using namespace firecast;
using nn::Tape;
using nn::Tensor;
using testutil::make_grid_cube;
using testutil::oracle_sigmoid;
using testutil::random_tensor;

namespace {

PreparedCube prepare_raw(Datacube cube, const std::string& target) {
  PreparedCube pc;
  for (const auto& v : cube.header.variables) {
    if (v.name != target) pc.feature_vars.push_back(v.name);
  }
  pc.target_var = target;
  pc.target_binary = binarize_target(cube, target);
  pc.cube = std::move(cube);
  for (const auto& name : pc.feature_vars) {
    pc.feature_var_idx.push_back(pc.cube.header.var_index(name));
  }
  return pc;
}

// Cube with two driver variables (feature_dim = 6) filled with random values.
PreparedCube small_cube(int t_len, int lat, int lon, uint64_t seed, double fire_rate = 0.3) {
  Datacube cube = make_grid_cube(t_len, lat, lon, {"a", "b", "fire"});
  Rng rng(seed);
  for (auto& v : cube.data[0]) v = static_cast<float>(rng.uniform(-1, 1));
  for (auto& v : cube.data[1]) v = static_cast<float>(rng.uniform(-1, 1));
  for (auto& v : cube.data[2]) v = rng.bernoulli(fire_rate) ? 1.0f : 0.0f;
  return prepare_raw(std::move(cube), "fire");
}

GruCellParams random_gru_params(int d, int hidden, Rng& rng, bool with_grad = false) {
  GruCellParams p;
  p.wz = random_tensor({d, hidden}, rng, with_grad, 0.5);
  p.uz = random_tensor({hidden, hidden}, rng, with_grad, 0.5);
  p.bz = random_tensor({hidden}, rng, with_grad, 0.5);
  p.wr = random_tensor({d, hidden}, rng, with_grad, 0.5);
  p.ur = random_tensor({hidden, hidden}, rng, with_grad, 0.5);
  p.br = random_tensor({hidden}, rng, with_grad, 0.5);
  p.wh = random_tensor({d, hidden}, rng, with_grad, 0.5);
  p.uh = random_tensor({hidden, hidden}, rng, with_grad, 0.5);
  p.bh = random_tensor({hidden}, rng, with_grad, 0.5);
  return p;
}

// Plain-loop oracle for one GRU step, equation by equation.
std::vector<double> gru_oracle(const std::vector<double>& x, const std::vector<double>& h,
                               const GruCellParams& p) {
  const int d = p.wz.dim(0), m = p.wz.dim(1);
  auto gate = [&](const Tensor& w, const Tensor& u, const Tensor& b,
                  const std::vector<double>& hh) {
    std::vector<double> out(static_cast<size_t>(m));
    for (int j = 0; j < m; ++j) {
      double acc = b.at(j);
      for (int i = 0; i < d; ++i) acc += x[static_cast<size_t>(i)] * w.at(i, j);
      for (int i = 0; i < m; ++i) acc += hh[static_cast<size_t>(i)] * u.at(i, j);
      out[static_cast<size_t>(j)] = acc;
    }
    return out;
  };
  auto z = gate(p.wz, p.uz, p.bz, h);
  auto r = gate(p.wr, p.ur, p.br, h);
  for (auto& v : z) v = oracle_sigmoid(v);
  for (auto& v : r) v = oracle_sigmoid(v);
  std::vector<double> rh(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) rh[static_cast<size_t>(i)] = r[static_cast<size_t>(i)] * h[static_cast<size_t>(i)];
  auto cand = gate(p.wh, p.uh, p.bh, rh);
  for (auto& v : cand) v = std::tanh(v);
  std::vector<double> out(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    out[static_cast<size_t>(i)] = z[static_cast<size_t>(i)] * h[static_cast<size_t>(i)] +
                                  (1.0 - z[static_cast<size_t>(i)]) * cand[static_cast<size_t>(i)];
  }
  return out;
}

// Dense two-layer GCN oracle in plain loops.
std::vector<double> gcn2_oracle(const std::vector<double>& a_hat, const std::vector<double>& x,
                                int n, int d, const Gcn2Params& p) {
  const int h1 = p.w0.dim(1), h2 = p.w1.dim(1);
  auto matmul_loops = [](const std::vector<double>& a, const std::vector<double>& b, int rows,
                         int inner, int cols) {
    std::vector<double> c(static_cast<size_t>(rows) * cols, 0.0);
    for (int i = 0; i < rows; ++i) {
      for (int k = 0; k < inner; ++k) {
        for (int j = 0; j < cols; ++j) {
          c[static_cast<size_t>(i) * cols + j] +=
              a[static_cast<size_t>(i) * inner + k] * b[static_cast<size_t>(k) * cols + j];
        }
      }
    }
    return c;
  };
  auto ax = matmul_loops(a_hat, x, n, n, d);
  auto l1 = matmul_loops(ax, *p.w0.data, n, d, h1);
  for (auto& v : l1) v = std::max(0.0, v);
  auto al1 = matmul_loops(a_hat, l1, n, n, h1);
  auto l2 = matmul_loops(al1, *p.w1.data, n, h1, h2);
  for (auto& v : l2) v = oracle_sigmoid(v);
  return l2;
}

TgcnCellParams random_tgcn_params(int d, int hidden, Rng& rng, bool with_grad = false) {
  TgcnCellParams p;
  auto gcn = [&] {
    Gcn2Params g;
    g.w0 = random_tensor({d, hidden}, rng, with_grad, 0.5);
    g.w1 = random_tensor({hidden, hidden}, rng, with_grad, 0.5);
    return g;
  };
  p.gcn_u = gcn();
  p.gcn_r = gcn();
  p.gcn_c = gcn();
  p.wu = random_tensor({2 * hidden, hidden}, rng, with_grad, 0.4);
  p.bu = random_tensor({hidden}, rng, with_grad, 0.4);
  p.wr = random_tensor({2 * hidden, hidden}, rng, with_grad, 0.4);
  p.br = random_tensor({hidden}, rng, with_grad, 0.4);
  p.wc = random_tensor({2 * hidden, hidden}, rng, with_grad, 0.4);
  p.bc = random_tensor({hidden}, rng, with_grad, 0.4);
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// GRU
// ---------------------------------------------------------------------------

TEST_CASE("gru_cell_step") {
  Rng rng(51);
  SUBCASE("zero parameters and zero state stay at zero") {
    GruCellParams p;
    p.wz = Tensor::zeros({3, 4});
    p.uz = Tensor::zeros({4, 4});
    p.bz = Tensor::zeros({4});
    p.wr = Tensor::zeros({3, 4});
    p.ur = Tensor::zeros({4, 4});
    p.br = Tensor::zeros({4});
    p.wh = Tensor::zeros({3, 4});
    p.uh = Tensor::zeros({4, 4});
    p.bh = Tensor::zeros({4});
    Tensor x = random_tensor({1, 3}, rng);
    Tensor h = Tensor::zeros({1, 4});
    Tensor out = gru_cell_step(nullptr, x, h, p);
    for (int i = 0; i < 4; ++i) CHECK(out.at(i) == 0.0);
  }
  SUBCASE("saturated update gate holds the previous state") {
    GruCellParams p = random_gru_params(3, 4, rng);
    for (auto& v : *p.bz.data) v = 60.0;  // z -> 1
    Tensor x = random_tensor({1, 3}, rng);
    Tensor h = random_tensor({1, 4}, rng);
    Tensor out = gru_cell_step(nullptr, x, h, p);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(out.at(i) - h.at(i)) < 1e-12);
  }
  SUBCASE("random instance matches the equation-by-equation oracle to 1e-12") {
    for (int trial = 0; trial < 20; ++trial) {
      GruCellParams p = random_gru_params(5, 6, rng);
      Tensor x = random_tensor({1, 5}, rng);
      Tensor h = random_tensor({1, 6}, rng);
      Tensor out = gru_cell_step(nullptr, x, h, p);
      auto expected = gru_oracle(*x.data, *h.data, p);
      for (int i = 0; i < 6; ++i) CHECK(std::abs(out.at(i) - expected[static_cast<size_t>(i)]) < 1e-12);
    }
  }
}

TEST_CASE("gru_forward") {
  PreparedCube pc = small_cube(8, 2, 2, 52);
  ModelConfig cfg;
  cfg.model = "gru";
  cfg.feature_dim = pc.feature_dim();
  cfg.spec = SampleSpec{1, 1, 0, 1};
  cfg.gru_hidden = 8;

  SUBCASE("ts=1 equals one cell step per layer plus the head") {
    auto model = make_model(cfg, 7);
    Sample s = extract_sample(pc, cfg.spec, CellTime{0, 0, 3});
    Rng rng(0);
    const double score = model->forward(nullptr, s, false, rng).value();

    auto& st = model->params();
    GruCellParams l0{st.get("gru0.wz"), st.get("gru0.uz"), st.get("gru0.bz"),
                     st.get("gru0.wr"), st.get("gru0.ur"), st.get("gru0.br"),
                     st.get("gru0.wh"), st.get("gru0.uh"), st.get("gru0.bh")};
    GruCellParams l1{st.get("gru1.wz"), st.get("gru1.uz"), st.get("gru1.bz"),
                     st.get("gru1.wr"), st.get("gru1.ur"), st.get("gru1.br"),
                     st.get("gru1.wh"), st.get("gru1.uh"), st.get("gru1.bh")};
    Tensor x = Tensor::values({1, cfg.feature_dim},
                              std::vector<double>(s.features.data->begin(), s.features.data->end()));
    Tensor h0 = gru_cell_step(nullptr, x, Tensor::zeros({1, 8}), l0);
    Tensor h1 = gru_cell_step(nullptr, h0, Tensor::zeros({1, 8}), l1);
    double logit = st.get("head.b").at(0);
    for (int i = 0; i < 8; ++i) logit += h1.at(i) * st.get("head.w").at(i, 0);
    CHECK(score == doctest::Approx(oracle_sigmoid(logit)).epsilon(1e-12));
  }
  SUBCASE("eval mode is deterministic") {
    cfg.spec.ts = 4;
    auto model = make_model(cfg, 8);
    Sample s = extract_sample(pc, cfg.spec, CellTime{1, 1, 4});
    Rng r1(1), r2(2);
    CHECK(model->forward(nullptr, s, false, r1).value() ==
          model->forward(nullptr, s, false, r2).value());
  }
  SUBCASE("full-loss gradients match finite differences below 1e-5") {
    cfg.spec.ts = 3;
    cfg.gru_hidden = 6;
    auto model = make_model(cfg, 9);
    Sample s = extract_sample(pc, cfg.spec, CellTime{0, 1, 4});
    auto loss = [&](Tape& tape) {
      Rng drop_rng(1234);  // fixed dropout mask across probe evaluations
      Tensor score = model->forward(&tape, s, true, drop_rng);
      return bce_loss(&tape, score, 1.0);
    };
    auto report = grad_check(loss, model->params(), 1e-5, 4, 5);
    INFO("worst ", report.worst_param);
    CHECK(report.max_rel_err < 1e-5);
  }
}

// ---------------------------------------------------------------------------
// Conv-LSTM
// ---------------------------------------------------------------------------

namespace {

ConvLstmCellParams zero_convlstm_params(int c, int f, int k) {
  ConvLstmCellParams p;
  p.wxi = Tensor::zeros({c, f, k, k});
  p.whi = Tensor::zeros({c, c, k, k});
  p.bi = Tensor::zeros({c});
  p.wxf = Tensor::zeros({c, f, k, k});
  p.whf = Tensor::zeros({c, c, k, k});
  p.bf = Tensor::zeros({c});
  p.wxo = Tensor::zeros({c, f, k, k});
  p.who = Tensor::zeros({c, c, k, k});
  p.bo = Tensor::zeros({c});
  p.wxg = Tensor::zeros({c, f, k, k});
  p.whg = Tensor::zeros({c, c, k, k});
  p.bg = Tensor::zeros({c});
  return p;
}

ConvLstmCellParams random_convlstm_params(int c, int f, int k, Rng& rng) {
  ConvLstmCellParams p = zero_convlstm_params(c, f, k);
  for (Tensor* t : {&p.wxi, &p.whi, &p.bi, &p.wxf, &p.whf, &p.bf, &p.wxo, &p.who, &p.bo, &p.wxg,
                    &p.whg, &p.bg}) {
    for (auto& v : *t->data) v = rng.uniform(-0.5, 0.5);
  }
  return p;
}

// Loop-based oracle for one Conv-LSTM step.
void convlstm_oracle(const std::vector<double>& x, const std::vector<double>& h,
                     const std::vector<double>& c, const ConvLstmCellParams& p, int ci, int co,
                     int side, int k, std::vector<double>& h_out, std::vector<double>& c_out) {
  const int pad = k / 2;
  auto conv_at = [&](const std::vector<double>& in, const Tensor& kern, int channels, int o,
                     int i, int j) {
    double acc = 0.0;
    for (int ch = 0; ch < channels; ++ch) {
      for (int u = 0; u < k; ++u) {
        for (int v = 0; v < k; ++v) {
          const int a = i + u - pad, b = j + v - pad;
          if (a < 0 || a >= side || b < 0 || b >= side) continue;
          acc += in[(static_cast<size_t>(ch) * side + a) * side + b] *
                 (*kern.data)[((static_cast<size_t>(o) * channels + ch) * k + u) * k + v];
        }
      }
    }
    return acc;
  };
  h_out.assign(static_cast<size_t>(co) * side * side, 0.0);
  c_out.assign(static_cast<size_t>(co) * side * side, 0.0);
  for (int o = 0; o < co; ++o) {
    for (int i = 0; i < side; ++i) {
      for (int j = 0; j < side; ++j) {
        const size_t idx = (static_cast<size_t>(o) * side + i) * side + j;
        const double ig = oracle_sigmoid(conv_at(x, p.wxi, ci, o, i, j) +
                                         conv_at(h, p.whi, co, o, i, j) + p.bi.at(o));
        const double fg = oracle_sigmoid(conv_at(x, p.wxf, ci, o, i, j) +
                                         conv_at(h, p.whf, co, o, i, j) + p.bf.at(o));
        const double og = oracle_sigmoid(conv_at(x, p.wxo, ci, o, i, j) +
                                         conv_at(h, p.who, co, o, i, j) + p.bo.at(o));
        const double gg = std::tanh(conv_at(x, p.wxg, ci, o, i, j) +
                                    conv_at(h, p.whg, co, o, i, j) + p.bg.at(o));
        c_out[idx] = fg * c[idx] + ig * gg;
        h_out[idx] = og * std::tanh(c_out[idx]);
      }
    }
  }
}

}  // namespace

TEST_CASE("convlstm_cell_step") {
  Rng rng(53);
  SUBCASE("all-zero parameters: gates 0.5, candidate 0") {
    const int c = 2, f = 3, side = 3;
    ConvLstmCellParams p = zero_convlstm_params(c, f, 3);
    Tensor x = random_tensor({f, side, side}, rng);
    ConvLstmState prev;
    prev.h = random_tensor({c, side, side}, rng);
    prev.c = random_tensor({c, side, side}, rng);
    ConvLstmState next = convlstm_cell_step(nullptr, x, prev, p);
    for (long long i = 0; i < next.c.numel(); ++i) {
      CHECK(next.c.at(static_cast<int>(i)) ==
            doctest::Approx(0.5 * prev.c.at(static_cast<int>(i))).epsilon(1e-14));
      CHECK(next.h.at(static_cast<int>(i)) ==
            doctest::Approx(0.5 * std::tanh(0.5 * prev.c.at(static_cast<int>(i)))).epsilon(1e-14));
    }
  }
  SUBCASE("1x1 grid with 1x1 kernels equals the dense scalar oracle") {
    const int c = 3, f = 2;
    ConvLstmCellParams p = random_convlstm_params(c, f, 1, rng);
    Tensor x = random_tensor({f, 1, 1}, rng);
    ConvLstmState prev;
    prev.h = random_tensor({c, 1, 1}, rng);
    prev.c = random_tensor({c, 1, 1}, rng);
    ConvLstmState next = convlstm_cell_step(nullptr, x, prev, p);
    for (int o = 0; o < c; ++o) {
      auto dense_gate = [&](const Tensor& wx, const Tensor& wh, const Tensor& b) {
        double acc = b.at(o);
        for (int i = 0; i < f; ++i) acc += x.at(i) * (*wx.data)[static_cast<size_t>(o) * f + i];
        for (int i = 0; i < c; ++i) acc += prev.h.at(i) * (*wh.data)[static_cast<size_t>(o) * c + i];
        return acc;
      };
      const double ig = oracle_sigmoid(dense_gate(p.wxi, p.whi, p.bi));
      const double fg = oracle_sigmoid(dense_gate(p.wxf, p.whf, p.bf));
      const double og = oracle_sigmoid(dense_gate(p.wxo, p.who, p.bo));
      const double gg = std::tanh(dense_gate(p.wxg, p.whg, p.bg));
      const double ce = fg * prev.c.at(o) + ig * gg;
      CHECK(next.c.at(o) == doctest::Approx(ce).epsilon(1e-12));
      CHECK(next.h.at(o) == doctest::Approx(og * std::tanh(ce)).epsilon(1e-12));
    }
  }
  SUBCASE("random 3x3 instance matches the loop oracle to 1e-12") {
    for (int trial = 0; trial < 20; ++trial) {
      const int c = 2, f = 3, side = 3;
      ConvLstmCellParams p = random_convlstm_params(c, f, 3, rng);
      Tensor x = random_tensor({f, side, side}, rng);
      ConvLstmState prev;
      prev.h = random_tensor({c, side, side}, rng);
      prev.c = random_tensor({c, side, side}, rng);
      ConvLstmState next = convlstm_cell_step(nullptr, x, prev, p);
      std::vector<double> ho, co;
      convlstm_oracle(*x.data, *prev.h.data, *prev.c.data, p, f, c, side, 3, ho, co);
      for (long long i = 0; i < next.h.numel(); ++i) {
        CHECK(std::abs(next.h.at(static_cast<int>(i)) - ho[static_cast<size_t>(i)]) < 1e-12);
        CHECK(std::abs(next.c.at(static_cast<int>(i)) - co[static_cast<size_t>(i)]) < 1e-12);
      }
    }
  }
}

TEST_CASE("convlstm_forward") {
  PreparedCube pc = small_cube(8, 4, 4, 54);
  ModelConfig cfg;
  cfg.model = "convlstm";
  cfg.feature_dim = pc.feature_dim();
  cfg.spec = SampleSpec{2, 1, 1, 9};
  cfg.convlstm_hidden = 3;
  cfg.mlp_hidden = {8, 4};

  SUBCASE("zero parameters: input-independent sigmoid of the output bias") {
    auto model = make_model(cfg, 55);
    for (const auto& name : model->params().names()) {
      auto& t = model->params().get(name);
      if (name != "mlpout.b") std::fill(t.data->begin(), t.data->end(), 0.0);
    }
    const double b_out = model->params().get("mlpout.b").at(0);
    Rng rng(0);
    Sample s1 = extract_sample(pc, cfg.spec, CellTime{1, 1, 3});
    Sample s2 = extract_sample(pc, cfg.spec, CellTime{2, 2, 5});
    const double score1 = model->forward(nullptr, s1, false, rng).value();
    const double score2 = model->forward(nullptr, s2, false, rng).value();
    CHECK(score1 == doctest::Approx(oracle_sigmoid(b_out)).epsilon(1e-14));
    CHECK(score1 == score2);
  }
  SUBCASE("ts=1 equals a single cell step plus the readout") {
    cfg.spec.ts = 1;
    auto model = make_model(cfg, 56);
    Sample s = extract_sample(pc, cfg.spec, CellTime{1, 2, 2});
    Rng rng(0);
    const double score = model->forward(nullptr, s, false, rng).value();

    auto& st = model->params();
    ConvLstmCellParams p{st.get("cell.wxi"), st.get("cell.whi"), st.get("cell.bi"),
                         st.get("cell.wxf"), st.get("cell.whf"), st.get("cell.bf"),
                         st.get("cell.wxo"), st.get("cell.who"), st.get("cell.bo"),
                         st.get("cell.wxg"), st.get("cell.whg"), st.get("cell.bg")};
    Tensor x = Tensor::values({cfg.feature_dim, 3, 3},
                              std::vector<double>(s.features.data->begin(), s.features.data->end()));
    ConvLstmState prev;
    prev.h = Tensor::zeros({3, 3, 3});
    prev.c = Tensor::zeros({3, 3, 3});
    ConvLstmState one = convlstm_cell_step(nullptr, x, prev, p);
    // Readout by hand.
    std::vector<double> cur(one.h.data->begin(), one.h.data->end());
    for (int layer = 0; layer < 2; ++layer) {
      const std::string name = "mlp" + std::to_string(layer);
      const Tensor& w = st.get(name + ".w");
      const Tensor& b = st.get(name + ".b");
      std::vector<double> next(static_cast<size_t>(w.dim(1)));
      for (int j = 0; j < w.dim(1); ++j) {
        double acc = b.at(j);
        for (int i = 0; i < w.dim(0); ++i) acc += cur[static_cast<size_t>(i)] * w.at(i, j);
        next[static_cast<size_t>(j)] = std::max(0.0, acc);
      }
      cur = next;
    }
    double logit = st.get("mlpout.b").at(0);
    for (size_t i = 0; i < cur.size(); ++i) {
      logit += cur[i] * st.get("mlpout.w").at(static_cast<int>(i), 0);
    }
    CHECK(score == doctest::Approx(oracle_sigmoid(logit)).epsilon(1e-12));
  }
  SUBCASE("full-loss gradients match finite differences below 1e-4") {
    auto model = make_model(cfg, 57);
    Sample s = extract_sample(pc, cfg.spec, CellTime{1, 1, 4});
    Rng rng(0);
    auto loss = [&](Tape& tape) {
      Rng r(0);
      Tensor score = model->forward(&tape, s, true, r);
      return bce_loss(&tape, score, 0.0);
    };
    auto report = grad_check(loss, model->params(), 1e-5, 4, 58);
    INFO("worst ", report.worst_param);
    CHECK(report.max_rel_err < 1e-4);
  }
}

// ---------------------------------------------------------------------------
// GCN / T-GCN
// ---------------------------------------------------------------------------

TEST_CASE("gcn2_forward") {
  Rng rng(61);
  SUBCASE("single vertex reduces to sigmoid(relu(x w0) w1)") {
    Gcn2Params p;
    p.w0 = random_tensor({3, 4}, rng);
    p.w1 = random_tensor({4, 2}, rng);
    Tensor a = Tensor::values({1, 1}, {1.0});
    Tensor x = random_tensor({1, 3}, rng);
    Tensor y = gcn2_forward(nullptr, a, x, p);
    for (int j = 0; j < 2; ++j) {
      double acc = 0;
      for (int k = 0; k < 4; ++k) {
        double pre = 0;
        for (int i = 0; i < 3; ++i) pre += x.at(i) * p.w0.at(i, k);
        acc += std::max(0.0, pre) * p.w1.at(k, j);
      }
      CHECK(y.at(j) == doctest::Approx(oracle_sigmoid(acc)).epsilon(1e-12));
    }
  }
  SUBCASE("zero features give sigmoid(0) = 0.5 everywhere") {
    GridGraph g = build_grid_graph(1, 5);
    Gcn2Params p;
    p.w0 = random_tensor({3, 4}, rng);
    p.w1 = random_tensor({4, 2}, rng);
    Tensor a = Tensor::values({9, 9}, g.a_hat_norm);
    Tensor x = Tensor::zeros({9, 3});
    Tensor y = gcn2_forward(nullptr, a, x, p);
    for (long long i = 0; i < y.numel(); ++i) CHECK(y.at(static_cast<int>(i)) == 0.5);
  }
  SUBCASE("random n=4 matches the dense matrix-chain oracle to 1e-12") {
    for (int trial = 0; trial < 20; ++trial) {
      const int n = 4, d = 3;
      std::vector<double> adj(16, 0.0);
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          if (rng.bernoulli(0.5)) {
            adj[static_cast<size_t>(i) * n + j] = adj[static_cast<size_t>(j) * n + i] = 1.0;
          }
        }
      }
      auto a_hat = normalize_adjacency(adj, n, true);
      Gcn2Params p;
      p.w0 = random_tensor({d, 5}, rng);
      p.w1 = random_tensor({5, 6}, rng);
      Tensor a = Tensor::values({n, n}, a_hat);
      Tensor x = random_tensor({n, d}, rng);
      Tensor y = gcn2_forward(nullptr, a, x, p);
      auto expected = gcn2_oracle(a_hat, *x.data, n, d, p);
      for (long long i = 0; i < y.numel(); ++i) {
        CHECK(std::abs(y.at(static_cast<int>(i)) - expected[static_cast<size_t>(i)]) < 1e-12);
      }
    }
  }
  SUBCASE("vertex relabeling permutes the outputs by exactly the same permutation") {
    const int n = 9, d = 4;
    GridGraph g = build_grid_graph(1, 4);
    Gcn2Params p;
    p.w0 = random_tensor({d, 5}, rng);
    p.w1 = random_tensor({5, 5}, rng);
    Tensor x = random_tensor({n, d}, rng);
    Tensor a = Tensor::values({n, n}, g.a_hat_norm);
    Tensor y = gcn2_forward(nullptr, a, x, p);

    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
    Rng shuffle_rng(62);
    shuffle_rng.shuffle(perm);
    Tensor xp = Tensor::zeros({n, d});
    Tensor ap = Tensor::zeros({n, n});
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) xp.at(perm[static_cast<size_t>(i)], j) = x.at(i, j);
      for (int j = 0; j < n; ++j) {
        ap.at(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]) = g.a_hat_at(i, j);
      }
    }
    Tensor yp = gcn2_forward(nullptr, ap, xp, p);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < 5; ++j) {
        CHECK(yp.at(perm[static_cast<size_t>(i)], j) == doctest::Approx(y.at(i, j)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("tgcn_cell_step") {
  Rng rng(63);
  GridGraph g = build_grid_graph(1, 5);
  Tensor a = Tensor::values({9, 9}, g.a_hat_norm);

  SUBCASE("state stays strictly inside (-1, 1)") {
    TgcnCellParams p = random_tgcn_params(4, 6, rng);
    Tensor h = Tensor::zeros({9, 6});
    for (int step = 0; step < 5; ++step) {
      Tensor x = random_tensor({9, 4}, rng, false, 2.0);
      h = tgcn_cell_step(nullptr, a, x, h, p);
      for (long long i = 0; i < h.numel(); ++i) {
        CHECK(std::abs(h.at(static_cast<int>(i))) < 1.0);
      }
    }
  }
  SUBCASE("saturated update gate holds the previous state") {
    TgcnCellParams p = random_tgcn_params(4, 6, rng);
    for (auto& v : *p.bu.data) v = 60.0;
    Tensor h = random_tensor({9, 6}, rng);
    Tensor x = random_tensor({9, 4}, rng);
    Tensor out = tgcn_cell_step(nullptr, a, x, h, p);
    for (long long i = 0; i < out.numel(); ++i) {
      CHECK(std::abs(out.at(static_cast<int>(i)) - h.at(static_cast<int>(i))) < 1e-12);
    }
  }
  SUBCASE("random n=4 instance matches the equation-by-equation oracle to 1e-12") {
    const int n = 4, d = 3, hidden = 5;
    std::vector<double> adj = {0, 1, 0, 1, 1, 0, 1, 0, 0, 1, 0, 1, 1, 0, 1, 0};
    auto a_hat = normalize_adjacency(adj, n, true);
    Tensor a4 = Tensor::values({n, n}, a_hat);
    for (int trial = 0; trial < 20; ++trial) {
      TgcnCellParams p = random_tgcn_params(d, hidden, rng);
      Tensor x = random_tensor({n, d}, rng);
      Tensor h = random_tensor({n, hidden}, rng);
      Tensor out = tgcn_cell_step(nullptr, a4, x, h, p);

      auto gu = gcn2_oracle(a_hat, *x.data, n, d, p.gcn_u);
      auto gr = gcn2_oracle(a_hat, *x.data, n, d, p.gcn_r);
      auto gc = gcn2_oracle(a_hat, *x.data, n, d, p.gcn_c);
      for (int v = 0; v < n; ++v) {
        std::vector<double> u(static_cast<size_t>(hidden)), r(static_cast<size_t>(hidden));
        for (int j = 0; j < hidden; ++j) {
          double au = p.bu.at(j), ar = p.br.at(j);
          for (int i = 0; i < hidden; ++i) {
            au += gu[static_cast<size_t>(v) * hidden + i] * p.wu.at(i, j) +
                  h.at(v, i) * p.wu.at(hidden + i, j);
            ar += gr[static_cast<size_t>(v) * hidden + i] * p.wr.at(i, j) +
                  h.at(v, i) * p.wr.at(hidden + i, j);
          }
          u[static_cast<size_t>(j)] = oracle_sigmoid(au);
          r[static_cast<size_t>(j)] = oracle_sigmoid(ar);
        }
        for (int j = 0; j < hidden; ++j) {
          double ac = p.bc.at(j);
          for (int i = 0; i < hidden; ++i) {
            ac += gc[static_cast<size_t>(v) * hidden + i] * p.wc.at(i, j) +
                  r[static_cast<size_t>(i)] * h.at(v, i) * p.wc.at(hidden + i, j);
          }
          const double cand = std::tanh(ac);
          const double expected =
              u[static_cast<size_t>(j)] * h.at(v, j) + (1.0 - u[static_cast<size_t>(j)]) * cand;
          CHECK(std::abs(out.at(v, j) - expected) < 1e-12);
        }
      }
    }
  }
  SUBCASE("shared GCN parameters are rejected") {
    TgcnCellParams p = random_tgcn_params(4, 6, rng);
    p.gcn_r = p.gcn_u;
    CHECK_THROWS_AS(validate_tgcn_params(p), DataError);
  }
}

TEST_CASE("tgcn_forward") {
  PreparedCube pc = small_cube(8, 4, 4, 64);

  SUBCASE("n=1 graph reduces to the direct composition oracle") {
    ModelConfig cfg;
    cfg.model = "tgcn";
    cfg.feature_dim = pc.feature_dim();
    cfg.spec = SampleSpec{2, 1, 0, 1};
    cfg.gcn_hidden = 5;
    cfg.attn_heads = 2;
    cfg.attn_dim = 6;
    cfg.mlp_hidden = {4};
    auto model = make_model(cfg, 65);
    auto graph = std::make_shared<GridGraph>(build_grid_graph(0, 1));
    Sample s = extract_sample(pc, cfg.spec, CellTime{1, 1, 3}, graph);
    Rng rng(0);
    const double score = model->forward(nullptr, s, false, rng).value();

    // Oracle built from the cell/attention pieces composed directly: with a
    // single vertex the attention weight is 1, so the output is just the
    // value projection pushed through the output projection.
    auto& st = model->params();
    TgcnCellParams cell{{st.get("gcn_u.w0"), st.get("gcn_u.w1")},
                        {st.get("gcn_r.w0"), st.get("gcn_r.w1")},
                        {st.get("gcn_c.w0"), st.get("gcn_c.w1")},
                        st.get("gate.wu"), st.get("gate.bu"),
                        st.get("gate.wr"), st.get("gate.br"),
                        st.get("gate.wc"), st.get("gate.bc")};
    Tensor a = Tensor::values({1, 1}, {1.0});
    Tensor h = Tensor::zeros({1, 5});
    const int feat = cfg.feature_dim;
    for (int j = 0; j < 2; ++j) {
      Tensor x = Tensor::zeros({1, feat});
      for (int f = 0; f < feat; ++f) x.at(0, f) = s.features.at(j * feat + f);
      h = tgcn_cell_step(nullptr, a, x, h, cell);
    }
    Tensor v = nn::dense(nullptr, h, st.get("attn.wv"), st.get("attn.bv"));
    Tensor attended = nn::dense(nullptr, v, st.get("attn.wo"), st.get("attn.bo"));
    double pooled_logit;
    {
      std::vector<double> pooled(static_cast<size_t>(cfg.attn_dim));
      for (int j = 0; j < cfg.attn_dim; ++j) {
        pooled[static_cast<size_t>(j)] = st.get("pool.w").at(0) * attended.at(0, j) / 1.0;
      }
      std::vector<double> cur = pooled;
      const Tensor& w = st.get("mlp0.w");
      const Tensor& b = st.get("mlp0.b");
      std::vector<double> next(4);
      for (int j = 0; j < 4; ++j) {
        double acc = b.at(j);
        for (int i = 0; i < cfg.attn_dim; ++i) acc += cur[static_cast<size_t>(i)] * w.at(i, j);
        next[static_cast<size_t>(j)] = std::max(0.0, acc);
      }
      pooled_logit = st.get("mlpout.b").at(0);
      for (int i = 0; i < 4; ++i) pooled_logit += next[static_cast<size_t>(i)] * st.get("mlpout.w").at(i, 0);
    }
    CHECK(score == doctest::Approx(oracle_sigmoid(pooled_logit)).epsilon(1e-10));
  }
  SUBCASE("eval determinism and missing-graph error") {
    ModelConfig cfg;
    cfg.model = "tgcn";
    cfg.feature_dim = pc.feature_dim();
    cfg.spec = SampleSpec{2, 1, 1, 4};
    cfg.gcn_hidden = 5;
    cfg.attn_heads = 2;
    cfg.attn_dim = 6;
    cfg.mlp_hidden = {4};
    auto model = make_model(cfg, 66);
    auto graph = std::make_shared<GridGraph>(build_grid_graph(1, 4));
    Sample s = extract_sample(pc, cfg.spec, CellTime{1, 1, 3}, graph);
    Rng rng(0);
    CHECK(model->forward(nullptr, s, false, rng).value() ==
          model->forward(nullptr, s, false, rng).value());
    Sample no_graph = extract_sample(pc, cfg.spec, CellTime{1, 1, 3});
    CHECK_THROWS_AS(model->forward(nullptr, no_graph, false, rng), DataError);
  }
  SUBCASE("full-loss gradients match finite differences below 1e-4") {
    ModelConfig cfg;
    cfg.model = "tgcn";
    cfg.feature_dim = pc.feature_dim();
    cfg.spec = SampleSpec{2, 1, 1, 4};
    cfg.gcn_hidden = 4;
    cfg.attn_heads = 2;
    cfg.attn_dim = 6;
    cfg.mlp_hidden = {5};
    auto model = make_model(cfg, 67);
    auto graph = std::make_shared<GridGraph>(build_grid_graph(1, 4));
    Sample s = extract_sample(pc, cfg.spec, CellTime{1, 1, 4}, graph);
    Rng rng(0);
    auto loss = [&](Tape& tape) {
      Rng r(0);
      nn::Tensor score = model->forward(&tape, s, true, r);
      return bce_loss(&tape, score, 1.0);
    };
    auto report = grad_check(loss, model->params(), 1e-5, 4, 68);
    INFO("worst ", report.worst_param);
    CHECK(report.max_rel_err < 1e-4);
  }
}

// ---------------------------------------------------------------------------
// model-level invariants
// ---------------------------------------------------------------------------

TEST_CASE("model scores lie strictly in (0,1) and ignore batch order") {
  PreparedCube pc = small_cube(10, 4, 4, 69);
  for (const std::string& name : {"gru", "convlstm", "tgcn"}) {
    ModelConfig cfg;
    cfg.model = name;
    cfg.feature_dim = pc.feature_dim();
    cfg.spec = name == "gru" ? SampleSpec{3, 1, 0, 1} : SampleSpec{3, 1, 1, 9};
    cfg.convlstm_hidden = 3;
    cfg.gcn_hidden = 5;
    cfg.attn_heads = 2;
    cfg.attn_dim = 6;
    cfg.mlp_hidden = {6};
    auto model = make_model(cfg, 70);
    std::shared_ptr<const GridGraph> graph;
    if (name == "tgcn") graph = std::make_shared<GridGraph>(build_grid_graph(1, 9));

    std::vector<SampleRef> refs;
    for (int lat = 1; lat < 3; ++lat) {
      for (int lon = 1; lon < 3; ++lon) refs.push_back({CellTime{lat, lon, 4}, 0});
    }
    auto forward_order = score_samples_with_model(*model, pc, refs, graph);
    std::vector<SampleRef> reversed(refs.rbegin(), refs.rend());
    auto reverse_order = score_samples_with_model(*model, pc, reversed, graph);
    for (size_t i = 0; i < refs.size(); ++i) {
      CHECK(forward_order[i].score > 0.0);
      CHECK(forward_order[i].score < 1.0);
      CHECK(forward_order[i].score == reverse_order[refs.size() - 1 - i].score);
    }
  }
}

TEST_CASE("model checkpoints round-trip through save/load") {
  PreparedCube pc = small_cube(8, 4, 4, 71);
  ModelConfig cfg;
  cfg.model = "tgcn";
  cfg.feature_dim = pc.feature_dim();
  cfg.spec = SampleSpec{2, 1, 1, 4};
  cfg.gcn_hidden = 5;
  cfg.attn_heads = 2;
  cfg.attn_dim = 6;
  cfg.mlp_hidden = {4};
  auto model = make_model(cfg, 72);

  testutil::TempDir dir("model_ckpt");
  nlohmann::json extra;
  extra["experiment"] = {{"note", "roundtrip"}};
  save_model(*model, dir.path() / "ck", extra);
  LoadedModel loaded = load_model(dir.path() / "ck");

  CHECK(loaded.model->config().model == "tgcn");
  CHECK(loaded.config.at("experiment").at("note") == "roundtrip");
  for (const auto& name : model->params().names()) {
    const auto& a = *model->params().get(name).data;
    const auto& b = *loaded.model->params().get(name).data;
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(std::bit_cast<uint64_t>(a[i]) == std::bit_cast<uint64_t>(b[i]));
    }
  }

  auto graph = std::make_shared<GridGraph>(build_grid_graph(1, 4));
  Sample s = extract_sample(pc, cfg.spec, CellTime{1, 1, 3}, graph);
  Rng rng(0);
  CHECK(model->forward(nullptr, s, false, rng).value() ==
        loaded.model->forward(nullptr, s, false, rng).value());
}
