#include "doctest.h"

#include <cmath>
#include <algorithm>
#include <sstream>

#include "tmlp/training.hpp"
#include "tmlp/rng.hpp"

using namespace tmlp;
using namespace tmlp::training;
using model::Architecture;

namespace {

// Fixed finite population resampled by step; deterministic per (seed, step).
template <class T>
class ToySource final : public BatchSource<T> {
 public:
  ToySource(index in, index out, std::uint64_t seed) : in_(in), out_(out), seed_(seed) {}

  void fill(long step, index count, Matrix<T>& coords, Matrix<T>& targets) override {
    Rng rng = Rng::derive(seed_, 1, std::uint64_t(step));
    coords = Matrix<T>(count, in_);
    targets = Matrix<T>(count, out_);
    for (index r = 0; r < count; ++r) {
      for (index c = 0; c < in_; ++c) coords.at(r, c) = T(rng.uniform(-1.0, 1.0));
      // smooth low-frequency target
      double s = 0.3;
      for (index c = 0; c < in_; ++c) s += 0.2 * std::sin(2.0 * double(coords.at(r, c)));
      for (index c = 0; c < out_; ++c) targets.at(r, c) = T(s);
    }
  }
  index input_dim() const override { return in_; }
  index output_dim() const override { return out_; }

 private:
  index in_, out_;
  std::uint64_t seed_;
};

ModelConfig toy_model(Architecture arch, index k = 3, index w = 8) {
  ModelConfig c;
  c.input_dim = 2;
  c.output_dim = 1;
  c.hidden_width = w;
  c.num_hidden_layers = k;
  c.omega0 = 30.0;
  c.architecture = arch;
  c.seed = 7;
  return c;
}

TailOutputs<double> fixed_outputs() {
  TailOutputs<double> t;
  t.y.push_back(Matrix<double>(2, 1, {1.0, 2.0}));
  t.y.push_back(Matrix<double>(2, 1, {0.5, 2.5}));
  t.t = t.y;
  return t;
}

}  // namespace

TEST_CASE("loss kind names round-trip") {
  CHECK(loss_kind_from_name(loss_kind_name(LossKind::l1_sdf)) == LossKind::l1_sdf);
  CHECK(loss_kind_from_name(loss_kind_name(LossKind::l2_image)) == LossKind::l2_image);
  CHECK_THROWS_AS(loss_kind_from_name("huber"), ConfigError);
}

TEST_CASE("loss weights validation") {
  LossWeights w;
  w.lambda = {0, 1, 1};
  CHECK_NOTHROW(w.validate(3));
  CHECK_THROWS_AS(w.validate(2), ConfigError);
  w.lambda = {0, 0, 0};
  CHECK_THROWS_AS(w.validate(3), ConfigError);
  w.lambda = {1, -0.5, 1};
  CHECK_THROWS_AS(w.validate(3), ConfigError);
}

TEST_CASE("lr_at applies every multiplier at or before the step") {
  TrainConfig c;
  c.initial_lr = 3e-4;
  c.schedule = {{7000, 0.25}, {8000, 0.25}, {9000, 0.25}};
  CHECK(lr_at(c, 0) == doctest::Approx(3e-4));
  CHECK(lr_at(c, 6999) == doctest::Approx(3e-4));
  CHECK(lr_at(c, 7000) == doctest::Approx(7.5e-5));
  CHECK(lr_at(c, 8500) == doctest::Approx(3e-4 * 0.0625));
  CHECK(lr_at(c, 20000) == doctest::Approx(3e-4 * 0.015625));
}

TEST_CASE("total_loss computes weighted means and scaled gradients") {
  auto outs = fixed_outputs();
  Matrix<double> gt(2, 1, {1.5, 1.5});
  LossWeights w;
  w.lambda = {2.0, 0.5};

  SUBCASE("squared error") {
    auto r = total_loss(outs, gt, w, LossKind::l2_image);
    // per-tail means over batch*channels: ((0.5)^2+(0.5)^2)/2 and (1+1)/2
    CHECK(r.per_tail[0] == doctest::Approx(0.25));
    CHECK(r.per_tail[1] == doctest::Approx(1.0));
    CHECK(r.total == doctest::Approx(2.0 * 0.25 + 0.5 * 1.0));
    // d/dy of lambda * mean((y-gt)^2) = lambda * 2(y-gt)/N
    CHECK(r.grads[0].at(0, 0) == doctest::Approx(2.0 * 2 * (-0.5) / 2));
    CHECK(r.grads[0].at(1, 0) == doctest::Approx(2.0 * 2 * (0.5) / 2));
    CHECK(r.grads[1].at(0, 0) == doctest::Approx(0.5 * 2 * (-1.0) / 2));
  }

  SUBCASE("absolute error") {
    auto r = total_loss(outs, gt, w, LossKind::l1_sdf);
    CHECK(r.per_tail[0] == doctest::Approx(0.5));
    CHECK(r.per_tail[1] == doctest::Approx(1.0));
    CHECK(r.grads[0].at(0, 0) == doctest::Approx(2.0 * (-1.0) / 2));
    CHECK(r.grads[1].at(1, 0) == doctest::Approx(0.5 * (1.0) / 2));
  }

  SUBCASE("shape mismatch throws") {
    Matrix<double> bad(3, 1);
    CHECK_THROWS_AS(total_loss(outs, bad, w, LossKind::l2_image), ShapeError);
  }
}

TEST_CASE("tail parameters stop receiving gradient once no later output is weighted") {
  auto mc = toy_model(Architecture::tmlp);
  auto params = model::init_sine<double>(mc);
  Matrix<double> x(4, 2);
  Rng rng(19);
  for (auto& v : x.data) v = rng.uniform(-1.0, 1.0);
  Matrix<double> gt(4, 1);
  for (auto& v : gt.data) v = rng.uniform(-1.0, 1.0);

  auto grad_for = [&](std::vector<double> lambda) {
    model::ForwardTrace<double> trace;
    auto out = forward_traced(params, x, trace);
    LossWeights w;
    w.lambda = std::move(lambda);
    auto loss = total_loss(out, gt, w, LossKind::l2_image);
    Vector<double> g;
    model::backward(params, trace, out, loss.grads, g);
    return g;
  };

  auto seg_norm = [&](const Vector<double>& g, index layer, bool tails_only) {
    double n = 0;
    for (const auto& seg : model::param_layout(mc)) {
      const bool is_tail = seg.kind != model::ParamSegment::Kind::hidden_w &&
                           seg.kind != model::ParamSegment::Kind::hidden_b;
      if (seg.layer == layer && is_tail == tails_only)
        for (index i = seg.offset; i < seg.offset + seg.count(); ++i) n += std::abs(g[i]);
    }
    return n;
  };

  // only y_1 weighted: tails 2 and 3 untouched, hidden layers 2,3 untouched
  auto g1 = grad_for({1, 0, 0});
  CHECK(seg_norm(g1, 1, true) > 0);
  CHECK(seg_norm(g1, 2, true) == 0);
  CHECK(seg_norm(g1, 3, true) == 0);
  CHECK(seg_norm(g1, 2, false) == 0);

  // y_2 weighted: tail 2 active through the cumulative sum, tail 3 still idle
  auto g2 = grad_for({0, 1, 0});
  CHECK(seg_norm(g2, 1, true) > 0);
  CHECK(seg_norm(g2, 2, true) > 0);
  CHECK(seg_norm(g2, 3, true) == 0);
  CHECK(seg_norm(g2, 2, false) > 0);
}

TEST_CASE("training reduces the loss and is reproducible") {
  auto mc = toy_model(Architecture::tmlp, 2, 16);
  TrainConfig tc;
  tc.iterations = 150;
  tc.batch_size = 64;
  tc.initial_lr = 1e-3;
  tc.loss_kind = LossKind::l2_image;
  tc.weights.lambda = {0.5, 1.0};
  tc.seed = 3;

  ToySource<float> src(2, 1, 3);
  auto r1 = train(tc, mc, src);
  REQUIRE(r1.history.rows.size() == 150);
  const double first = r1.history.rows.front().total;
  const double last = r1.history.rows.back().total;
  CHECK(last < 0.5 * first);

  auto r2 = train(tc, mc, src);
  CHECK(model::flatten(r1.params) == model::flatten(r2.params));
  CHECK(r1.history.rows.back().total == r2.history.rows.back().total);
}

TEST_CASE("train_from with zero iterations returns the start parameters") {
  auto mc = toy_model(Architecture::plain_mlp);
  auto start = model::init_sine<float>(mc);
  TrainConfig tc;
  tc.iterations = 0;
  tc.weights.lambda = {1.0};
  ToySource<float> src(2, 1, 4);
  auto r = train_from(tc, start, src);
  CHECK(model::flatten(r.params) == model::flatten(start));
  CHECK(r.history.rows.empty());
}

TEST_CASE("train rejects samplers with mismatched dimensions") {
  auto mc = toy_model(Architecture::plain_mlp);
  TrainConfig tc;
  tc.iterations = 1;
  tc.weights.lambda = {1.0};
  ToySource<float> bad(3, 1, 4);
  CHECK_THROWS_AS(train(tc, mc, bad), ShapeError);
}

TEST_CASE("history CSV lists one row per step") {
  TrainHistory h;
  h.rows.push_back({0, 1e-3, {0.5, 0.25}, 0.75});
  h.rows.push_back({1, 1e-3, {0.4, 0.2}, 0.6});
  std::ostringstream out;
  h.write_csv(out);
  const std::string s = out.str();
  CHECK(s.rfind("step,lr,", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 3);
}

TEST_CASE("head probing freezes the trunk and fits each depth") {
  auto mc = toy_model(Architecture::plain_mlp, 3, 16);
  TrainConfig tc;
  tc.iterations = 300;
  tc.batch_size = 64;
  tc.initial_lr = 1e-3;
  tc.weights.lambda = {1.0};
  tc.seed = 11;
  ToySource<float> src(2, 1, 11);
  auto trunk = train(tc, mc, src).params;

  TrainConfig head_tc = tc;
  head_tc.iterations = 200;
  auto probe = probe_retrain_heads(trunk, src, head_tc);
  REQUIRE(probe.models.size() == 3);
  REQUIRE(probe.histories.size() == 3);

  Matrix<float> eval_x, eval_t;
  src.fill(9999, 512, eval_x, eval_t);
  double zero_mse = 0;
  for (auto v : eval_t.data) zero_mse += double(v) * double(v);
  zero_mse /= double(eval_t.size());

  for (index j = 1; j <= 3; ++j) {
    const auto& m = probe.models[j - 1];
    CHECK(m.config.num_hidden_layers == j);
    CHECK(m.tails.size() == 1);
    for (index l = 0; l < j; ++l)
      CHECK(m.hidden_w[l].data == trunk.hidden_w[l].data);

    // every retrained head beats predicting zero on a held-out batch
    auto pred = forward(m, eval_x).y.back();
    double mse = 0;
    for (index i = 0; i < pred.size(); ++i) {
      const double d = double(pred.data[i]) - double(eval_t.data[i]);
      mse += d * d;
    }
    mse /= double(pred.size());
    CHECK(mse < 0.5 * zero_mse);
  }

  // fresh heads start near zero output and improve clearly
  for (index j = 1; j <= 2; ++j) {
    const auto& rows = probe.histories[j - 1].rows;
    double head_mean = 0, tail_mean = 0;
    for (int i = 0; i < 10; ++i) {
      head_mean += rows[i].total;
      tail_mean += rows[rows.size() - 1 - i].total;
    }
    CHECK(tail_mean < head_mean);
  }

  CHECK_THROWS_AS(probe_retrain_heads(model::init_sine<float>(toy_model(Architecture::tmlp)),
                                      src, head_tc),
                  ConfigError);
}
