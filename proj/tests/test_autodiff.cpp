#include <doctest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>

#include "lrxf/optim.hpp"
#include "lrxf/checkpoint.hpp"
#include "lrxf/rng.hpp"
#include "lrxf/tape.hpp"
#include "lrxf/tensor.hpp"

using namespace lrxf;
using ad::Tensor;
using ad::Tape;

namespace {

// Random-shape gradient check harness for a single primitive.
template <class BuildFn>
double check_op(BuildFn&& build, std::map<std::string, Tensor<double>> theta,
                double step = 1e-5) {
  auto res = ad::grad_check_all<double>(build, theta, step);
  return res.max_rel_err;
}

std::map<std::string, Tensor<double>> rand_inputs(
    std::vector<std::pair<std::string, std::vector<int>>> specs,
    std::uint64_t seed) {
  rng::Stream rs = rng::Stream::root(seed);
  std::map<std::string, Tensor<double>> out;
  for (auto& [name, shape] : specs)
    out[name] = Tensor<double>::randu(shape, -1.0, 1.0, rs);
  return out;
}

}  // namespace

TEST_CASE("matmul identity") {
  Tape<float> t;
  Tensor<float> eye({3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0f;
  rng::Stream rs = rng::Stream::root(7);
  Tensor<float> x = Tensor<float>::randu({3, 5}, -2.0f, 2.0f, rs);
  auto y = t.matmul(t.constant(eye), t.constant(x));
  CHECK(t.val(y).vec() == x.vec());
}

TEST_CASE("softmax symmetry") {
  Tape<float> t;
  auto y = t.softmax(t.constant(Tensor<float>::row({0.0f, 0.0f})));
  CHECK(t.val(y).at(0, 0) == doctest::Approx(0.5));
  CHECK(t.val(y).at(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("mse gradient matches 2x/n convention") {
  // d/dx mse(x, 0) at x=[1,2] with n=2 is x itself.
  Tape<float> t;
  auto x = t.variable(Tensor<float>::row({1.0f, 2.0f}));
  auto loss = t.mse(x, t.constant(Tensor<float>({1, 2})));
  t.backward(loss);
  CHECK(t.grad(x).at(0, 0) == doctest::Approx(1.0f));
  CHECK(t.grad(x).at(0, 1) == doctest::Approx(2.0f));
}

TEST_CASE("primitive backward rules pass grad check on random shapes") {
  rng::Stream shapes = rng::Stream::root(42);
  for (int rep = 0; rep < 4; ++rep) {
    int m = 1 + static_cast<int>(shapes.next_below(32));
    int k = 1 + static_cast<int>(shapes.next_below(32));
    int n = 1 + static_cast<int>(shapes.next_below(32));

    {
      auto theta = rand_inputs({{"a", {m, k}}, {"b", {k, n}}}, 100 + rep);
      double err = check_op(
          [](Tape<double>& t, auto& ids) {
            return t.mean_all(t.matmul(ids.at("a"), ids.at("b")));
          },
          theta);
      CHECK(err < 1e-4);
    }
    {
      auto theta = rand_inputs({{"a", {m, k}}, {"b", {n, k}}}, 200 + rep);
      double err = check_op(
          [](Tape<double>& t, auto& ids) {
            return t.mean_all(t.matmul_nt(ids.at("a"), ids.at("b")));
          },
          theta);
      CHECK(err < 1e-4);
    }
    {
      auto theta = rand_inputs({{"a", {m, n}}, {"b", {1, n}}}, 300 + rep);
      double err = check_op(
          [](Tape<double>& t, auto& ids) {
            return t.mean_all(
                t.mul(t.add(ids.at("a"), ids.at("b")), ids.at("b")));
          },
          theta);
      CHECK(err < 1e-4);
    }
    {
      auto theta = rand_inputs({{"x", {m, n}}}, 400 + rep);
      double err = check_op(
          [](Tape<double>& t, auto& ids) {
            return t.mean_all(t.gelu(ids.at("x")));
          },
          theta);
      CHECK(err < 1e-4);
    }
    {
      // weight the rows: a bare mean of softmax outputs is constant (rows
      // sum to one) and would check nothing
      auto theta = rand_inputs({{"x", {m, n}}}, 500 + rep);
      rng::Stream wr = rng::Stream::root(510 + rep);
      Tensor<double> w = Tensor<double>::randu({m, n}, -1.0, 1.0, wr);
      double err = check_op(
          [w](Tape<double>& t, auto& ids) {
            return t.mean_all(t.mul(t.softmax(ids.at("x")), t.constant(w)));
          },
          theta);
      CHECK(err < 1e-4);
    }
    {
      auto theta =
          rand_inputs({{"x", {m, n}}, {"g", {1, n}}, {"b", {1, n}}}, 600 + rep);
      // keep per-row variance away from zero: near-constant rows make the
      // normalizer's third derivative too large for central differences
      auto& x = theta["x"];
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c)
          x.at(r, c) += (c % 2 == 0 ? 0.6 : -0.6);
      double err = check_op(
          [](Tape<double>& t, auto& ids) {
            return t.mean_all(
                t.layer_norm(ids.at("x"), ids.at("g"), ids.at("b")));
          },
          theta);
      CHECK(err < 1e-4);
    }
    {
      auto theta = rand_inputs({{"x", {m, n}}, {"y", {m, n}}}, 700 + rep);
      double err = check_op(
          [](Tape<double>& t, auto& ids) {
            return t.mse(ids.at("x"), ids.at("y"));
          },
          theta);
      CHECK(err < 1e-4);
    }
    {
      auto theta = rand_inputs({{"x", {m, n}}, {"y", {m, n}}}, 800 + rep);
      double err = check_op(
          [n](Tape<double>& t, auto& ids) {
            auto c = t.concat_cols(ids.at("x"), ids.at("y"));
            auto s = t.slice_cols(c, n / 2, n);
            return t.mean_all(t.sigmoid(s));
          },
          theta);
      CHECK(err < 1e-4);
    }
    {
      auto theta = rand_inputs({{"x", {m, n}}}, 900 + rep);
      std::vector<int> labels;
      rng::Stream lr = rng::Stream::root(1000 + rep);
      for (int i = 0; i < m; ++i)
        labels.push_back(static_cast<int>(lr.next_below(n)));
      double err = check_op(
          [labels](Tape<double>& t, auto& ids) {
            return t.cross_entropy(ids.at("x"), labels);
          },
          theta);
      CHECK(err < 1e-4);
    }
    {
      auto theta = rand_inputs({{"t", {5, n}}}, 1100 + rep);
      std::vector<int> idx;
      rng::Stream ir = rng::Stream::root(1200 + rep);
      for (int i = 0; i < m; ++i)
        idx.push_back(static_cast<int>(ir.next_below(5)));
      double err = check_op(
          [idx](Tape<double>& t, auto& ids) {
            return t.mean_all(t.gather_rows(ids.at("t"), idx));
          },
          theta);
      CHECK(err < 1e-4);
    }
    {
      auto theta = rand_inputs({{"x", {m, n}}}, 1300 + rep);
      rng::Stream mr = rng::Stream::root(1400 + rep);
      Tensor<double> mask({m, n});
      for (auto& v : mask.vec()) v = mr.next_unit() < 0.3 ? 1.0 : 0.0;
      double err = check_op(
          [mask](Tape<double>& t, auto& ids) {
            return t.mean_all(t.masked_fill(ids.at("x"), mask, 0.5));
          },
          theta);
      CHECK(err < 1e-4);
    }
    {
      auto theta = rand_inputs({{"x", {m, n}}}, 1500 + rep);
      Tensor<double> targets({m, n});
      rng::Stream tr = rng::Stream::root(1600 + rep);
      for (auto& v : targets.vec()) v = tr.next_unit() < 0.5 ? 0.0 : 1.0;
      double err = check_op(
          [targets](Tape<double>& t, auto& ids) {
            return t.bce_logits(ids.at("x"), targets);
          },
          theta);
      CHECK(err < 1e-4);
    }
    {
      // relu is piecewise linear; keep probe points away from the kink
      // instead of relying on step luck.
      auto theta = rand_inputs({{"x", {m, n}}}, 1700 + rep);
      for (auto& v : theta["x"].vec())
        if (std::abs(v) < 0.05) v = v < 0 ? v - 0.05 : v + 0.05;
      double err = check_op(
          [](Tape<double>& t, auto& ids) {
            return t.mean_all(
                t.softplus(t.relu(t.scale(ids.at("x"), 1.7))));
          },
          theta, 1e-4);
      CHECK(err < 1e-4);
    }
    {
      auto theta = rand_inputs({{"x", {m, n}}}, 1800 + rep);
      double err = check_op(
          [m, n](Tape<double>& t, auto& ids) {
            return t.mean_all(t.mean_rows(t.reshape(ids.at("x"), {n, m})));
          },
          theta);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("two-layer perceptron with gelu passes grad check") {
  auto theta = rand_inputs(
      {{"x", {4, 6}}, {"w1", {6, 8}}, {"b1", {1, 8}}, {"w2", {8, 3}},
       {"b2", {1, 3}}},
      2024);
  double err = check_op(
      [](Tape<double>& t, auto& ids) {
        auto h = t.gelu(t.affine(ids.at("x"), ids.at("w1"), ids.at("b1")));
        auto y = t.affine(h, ids.at("w2"), ids.at("b2"));
        return t.mse(y, t.constant(Tensor<double>({4, 3})));
      },
      theta, 1e-4);
  CHECK(err < 1e-3);
}

TEST_CASE("sum of squares gradient is exact") {
  auto theta = std::map<std::string, Tensor<double>>{
      {"x", Tensor<double>::row({1.0, -2.0})}};
  double err = check_op(
      [](Tape<double>& t, auto& ids) {
        auto x = ids.at("x");
        return t.sum_all(t.mul(x, x));
      },
      theta, 1e-3);
  CHECK(err < 1e-6);
}

TEST_CASE("tape rejects second backward") {
  Tape<float> t;
  auto x = t.variable(Tensor<float>::row({1.0f, 2.0f}));
  auto loss = t.mean_all(x);
  t.backward(loss);
  CHECK_THROWS_AS(t.backward(loss), ad::TapeError);
}

TEST_CASE("shape mismatch names both shapes") {
  Tape<float> t;
  auto a = t.constant(Tensor<float>({2, 3}));
  auto b = t.constant(Tensor<float>({4, 5}));
  CHECK_THROWS_WITH_AS(t.matmul(a, b),
                       doctest::Contains("[2x3]"), ad::ShapeError);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  ad::ParamStore ps;
  ps.add("w", Tensor<float>::row({1.0f, -2.0f, 3.0f}));
  auto before = ps.at("w").value.vec();
  ad::AdamState st;
  CHECK(adam_step(ps, st));
  CHECK(ps.at("w").value.vec() == before);
}

TEST_CASE("adam: constant gradient moves parameters against its sign") {
  ad::ParamStore ps;
  ps.add("w", Tensor<float>::row({0.5f, -0.5f}));
  ad::AdamState st;
  ad::AdamConfig cfg;
  for (int i = 0; i < 50; ++i) {
    ps.at("w").grad = Tensor<float>::row({1.0f, -1.0f});
    adam_step(ps, st, cfg);
  }
  CHECK(ps.at("w").value.at(0) < 0.5f);
  CHECK(ps.at("w").value.at(1) > -0.5f);
}

TEST_CASE("adam: quadratic bowl converges") {
  ad::ParamStore ps;
  ps.add("x", Tensor<float>::row({1.0f, 1.0f}));
  ad::AdamState st;
  ad::AdamConfig cfg;
  cfg.lr = 1e-2f;
  for (int i = 0; i < 500; ++i) {
    ps.zero_grad();
    Tape<float> t;
    auto x = t.leaf(&ps.at("x").value);
    auto loss = t.sum_all(t.mul(x, x));
    t.backward(loss);
    ps.at("x").grad = t.grad(x);
    adam_step(ps, st, cfg);
  }
  float norm = std::sqrt(ps.at("x").value.at(0) * ps.at("x").value.at(0) +
                         ps.at("x").value.at(1) * ps.at("x").value.at(1));
  CHECK(norm < 1e-3f);
}

TEST_CASE("adam: non-finite gradient skips the step and counts it") {
  ad::ParamStore ps;
  ps.add("w", Tensor<float>::row({1.0f}));
  ps.at("w").grad.at(0) = std::numeric_limits<float>::quiet_NaN();
  ad::AdamState st;
  CHECK_FALSE(adam_step(ps, st));
  CHECK(st.skipped == 1);
  CHECK(ps.at("w").value.at(0) == 1.0f);
}

TEST_CASE("forward determinism: identical seeds give bitwise-equal losses") {
  auto run = [] {
    rng::Stream rs = rng::Stream::root(99);
    ad::ParamStore ps;
    ps.add("w", Tensor<float>::randu({8, 8}, -0.3f, 0.3f, rs));
    ad::AdamState st;
    std::vector<float> losses;
    for (int step = 0; step < 10; ++step) {
      rng::Stream batch = rng::Stream::root(99).split("batch").split(
          static_cast<std::uint64_t>(step));
      Tensor<float> x = Tensor<float>::randu({4, 8}, -1.0f, 1.0f, batch);
      ps.zero_grad();
      Tape<float> t;
      auto w = t.leaf(&ps.at("w").value);
      auto y = t.gelu(t.matmul(t.constant(x), w));
      auto loss = t.mse(y, t.constant(Tensor<float>({4, 8})));
      t.backward(loss);
      ps.at("w").grad = t.grad(w);
      adam_step(ps, st);
      losses.push_back(t.val(loss).item());
    }
    return losses;
  };
  CHECK(run() == run());
}

TEST_CASE("checkpoint round-trip is bitwise") {
  rng::Stream rs = rng::Stream::root(5);
  std::map<std::string, Tensor<float>> arrays;
  arrays["enc/w"] = Tensor<float>::randu({7, 3}, -2.0f, 2.0f, rs);
  arrays["enc/b"] = Tensor<float>::randu({1, 3}, -2.0f, 2.0f, rs);
  arrays["scalar"] = Tensor<float>::scalar(0.25f);
  const std::string path = "ckpt_test.lrxf";
  ad::save_arrays(path, arrays);
  auto loaded = ad::load_arrays(path);
  REQUIRE(loaded.size() == arrays.size());
  for (auto& [name, t] : arrays) {
    REQUIRE(loaded.count(name) == 1);
    CHECK(loaded.at(name).shape() == t.shape());
    CHECK(loaded.at(name).vec() == t.vec());
  }
}

TEST_CASE("checkpoint: truncated file reports corrupt payload") {
  std::map<std::string, Tensor<float>> arrays;
  arrays["w"] = Tensor<float>({4, 4}, 1.5f);
  const std::string path = "ckpt_trunc.lrxf";
  ad::save_arrays(path, arrays);
  // chop the tail
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(),
              static_cast<std::streamsize>(bytes.size() - 9));
  }
  CHECK_THROWS_WITH_AS(ad::load_arrays(path), doctest::Contains("corrupt"),
                       ad::CheckpointError);
}

TEST_CASE("checkpoint: version mismatch is an explicit error") {
  std::map<std::string, Tensor<float>> arrays;
  arrays["w"] = Tensor<float>({2}, 0.0f);
  const std::string path = "ckpt_version.lrxf";
  ad::save_arrays(path, arrays);
  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(4);
    std::uint16_t bad = 9;
    f.write(reinterpret_cast<const char*>(&bad), 2);
  }
  CHECK_THROWS_WITH_AS(ad::load_arrays(path), doctest::Contains("version"),
                       ad::CheckpointError);
}

TEST_CASE("rng streams are independent and reproducible") {
  rng::Stream a = rng::Stream::root(1).split("init");
  rng::Stream a2 = rng::Stream::root(1).split("init");
  rng::Stream b = rng::Stream::root(1).split("noise");
  CHECK(a.next_u64() == a2.next_u64());
  CHECK(a.next_u64() != b.next_u64());
  rng::Stream c = rng::Stream::root(1).split("init").split(4);
  rng::Stream d = rng::Stream::root(1).split("init").split(5);
  CHECK(c.next_u64() != d.next_u64());
}
