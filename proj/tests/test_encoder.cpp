#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "hct/encoder.hpp"
#include "hct/gradcheck.hpp"
#include "hct/oracleref.hpp"

using hct::EncoderSpec;
using hct::ParamStore;
using hct::Rng;
using hct::Tape;
using hct::Tensor;

namespace {

void check_bitwise(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

Tensor random_image(Rng& rng, int side, int ch) {
  Tensor t = Tensor::zeros({side, side, ch});
  for (auto& v : t.data) v = rng.uniform();
  return t;
}

EncoderSpec tiny_spec(int in_channels) {
  EncoderSpec s;
  s.input = 16;
  s.in_channels = in_channels;
  s.c_s = 4;
  s.c_d = 6;
  s.blocks = 1;
  s.heads = 2;
  s.mlp_ratio = 2;
  s.ln_eps = 1e-5;
  return s;
}

}  // namespace

TEST_CASE("encoder produces three token grids at strides 4, 8, 16") {
  Rng rng(41);
  const EncoderSpec spec = tiny_spec(3);
  ParamStore ps;
  hct::init_encoder_params(ps, "enc.rgb", spec, rng);
  const Tensor img = random_image(rng, 16, 3);

  Tape t;
  const auto out = hct::encode_stream(t, ps, "enc.rgb", t.leaf(img), spec);

  CHECK(out.l1.h == 4);
  CHECK(out.l1.w == 4);
  CHECK(out.l1.c == 4);
  CHECK(t.val(out.l1.id).shape == std::vector<int>{16, 4});
  CHECK(out.l2.h == 2);
  CHECK(out.l2.w == 2);
  CHECK(out.l2.c == 4);
  CHECK(t.val(out.l2.id).shape == std::vector<int>{4, 4});
  CHECK(out.l3.h == 1);
  CHECK(out.l3.w == 1);
  CHECK(out.l3.c == 6);
  CHECK(t.val(out.l3.id).shape == std::vector<int>{1, 6});
}

TEST_CASE("encoder accepts a 1-channel stream and rejects mismatched images") {
  Rng rng(42);
  const EncoderSpec spec = tiny_spec(1);
  ParamStore ps;
  hct::init_encoder_params(ps, "enc.dep", spec, rng);

  Tape t;
  const auto out = hct::encode_stream(t, ps, "enc.dep", t.leaf(random_image(rng, 16, 1)), spec);
  CHECK(t.val(out.l1.id).shape == std::vector<int>{16, 4});

  CHECK_THROWS_AS(hct::encode_stream(t, ps, "enc.dep", t.leaf(random_image(rng, 16, 3)), spec),
                  hct::ShapeError);
  CHECK_THROWS_AS(hct::encode_stream(t, ps, "enc.dep", t.leaf(random_image(rng, 8, 1)), spec),
                  hct::ShapeError);

  EncoderSpec bad = spec;
  bad.input = 24;
  CHECK_THROWS_AS(hct::init_encoder_params(ps, "x", bad, rng), hct::ShapeError);
  bad = spec;
  bad.c_d = 7;
  CHECK_THROWS_AS(hct::init_encoder_params(ps, "y", bad, rng), hct::ShapeError);
}

TEST_CASE("patch embedding matches a direct per-patch projection") {
  Rng rng(43);
  EncoderSpec spec = tiny_spec(3);
  spec.blocks = 0;
  ParamStore ps;
  hct::init_encoder_params(ps, "e", spec, rng);
  const Tensor img = random_image(rng, 16, 3);

  Tape t;
  const auto out = hct::encode_stream(t, ps, "e", t.leaf(img), spec);

  // Level 2: stride 8, tokens on a 2x2 lattice. Rebuild token (1,0) by hand.
  const int p = 8, c = 4;
  std::vector<double> patch;
  patch.reserve(static_cast<std::size_t>(p) * p * 3);
  for (int py = 0; py < p; ++py) {
    for (int px = 0; px < p; ++px) {
      for (int ch = 0; ch < 3; ++ch) patch.push_back(img.at(8 + py, 0 + px, ch));
    }
  }
  const auto proj = hct::oracle::matmul(patch, ps.at("e.l2.patch.w").data, 1, p * p * 3, c);
  const Tensor& tok = t.val(out.l2.id);
  const Tensor& pos = ps.at("e.l2.pos");
  for (int j = 0; j < c; ++j) {
    const double want = proj[static_cast<std::size_t>(j)] + ps.at("e.l2.patch.b").data[static_cast<std::size_t>(j)] +
                        pos.at(2, j);
    CHECK(std::fabs(tok.at(2, j) - want) < 1e-12);
  }
}

TEST_CASE("transformer blocks with zeroed output projections are the identity") {
  Rng rng(44);
  EncoderSpec spec = tiny_spec(3);
  spec.blocks = 2;
  ParamStore ps;
  hct::init_encoder_params(ps, "e", spec, rng);
  for (const auto& name : ps.names()) {
    if (name.find(".attn.wo") != std::string::npos || name.find(".mlp.w2") != std::string::npos) {
      auto& t = ps.at(name);
      std::fill(t.data.begin(), t.data.end(), 0.0);
    }
  }

  // With blocks=0 the same store's patch tables are read and the block
  // parameters are simply never bound, giving the pure patch-embed output.
  EncoderSpec flat = spec;
  flat.blocks = 0;
  const Tensor img = random_image(rng, 16, 3);
  Tape t1;
  const auto deep = hct::encode_stream(t1, ps, "e", t1.leaf(img), spec);
  Tape t2;
  const auto shallow = hct::encode_stream(t2, ps, "e", t2.leaf(img), flat);

  check_bitwise(t1.val(deep.l1.id).data, t2.val(shallow.l1.id).data);
  check_bitwise(t1.val(deep.l2.id).data, t2.val(shallow.l2.id).data);
  check_bitwise(t1.val(deep.l3.id).data, t2.val(shallow.l3.id).data);
}

TEST_CASE("encoder init is deterministic and scaled") {
  const EncoderSpec spec = tiny_spec(3);
  ParamStore a, b;
  {
    Rng r1(7);
    hct::init_encoder_params(a, "e", spec, r1);
  }
  {
    Rng r2(7);
    hct::init_encoder_params(b, "e", spec, r2);
  }
  REQUIRE(a.names() == b.names());
  for (const auto& name : a.names()) {
    check_bitwise(a.at(name).data, b.at(name).data);
  }

  // Projection entries respect the 1/sqrt(fan_in) bound.
  const double bound1 = 1.0 / std::sqrt(16.0 * 3.0);
  for (double v : a.at("e.l1.patch.w").data) CHECK(std::fabs(v) <= bound1);
  const double bound2 = 1.0 / std::sqrt(4.0);
  for (double v : a.at("e.l1.blk0.attn.wq").data) CHECK(std::fabs(v) <= bound2);

  // LayerNorm starts as the identity transform, biases at zero.
  CHECK(a.at("e.l1.blk0.ln1.g").data == std::vector<double>(4, 1.0));
  CHECK(a.at("e.l1.blk0.ln1.b").data == std::vector<double>(4, 0.0));
  CHECK(a.at("e.l1.patch.b").data == std::vector<double>(4, 0.0));
  CHECK(a.at("e.l1.blk0.mlp.b1").data == std::vector<double>(8, 0.0));

  // Positional tables are small but not degenerate.
  double mx = 0.0, sum = 0.0;
  const auto& pos = a.at("e.l1.pos").data;
  for (double v : pos) {
    mx = std::max(mx, std::fabs(v));
    sum += v * v;
  }
  CHECK(mx > 0.0);
  CHECK(mx < 0.2);
  CHECK(std::sqrt(sum / static_cast<double>(pos.size())) < 0.05);
}

TEST_CASE("encoder gradients are exact") {
  Rng rng(45);
  const EncoderSpec spec = tiny_spec(1);
  ParamStore ps;
  hct::init_encoder_params(ps, "e", spec, rng);
  const Tensor img = random_image(rng, 16, 1);
  const Tensor w1 = Tensor::from({16, 4}, [&] {
    std::vector<double> v(64);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
  }());
  const Tensor w2 = Tensor::from({4, 4}, [&] {
    std::vector<double> v(16);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
  }());
  const Tensor w3 = Tensor::from({1, 6}, [&] {
    std::vector<double> v(6);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
  }());

  const hct::LossFn fn = [&](ParamStore& p, bool need_grad) {
    Tape t;
    const auto out = hct::encode_stream(t, p, "e", t.leaf(img), spec);
    const int loss =
        t.add(t.add(t.sum_all(t.mul(out.l1.id, t.leaf(w1))), t.sum_all(t.mul(out.l2.id, t.leaf(w2)))),
              t.sum_all(t.mul(out.l3.id, t.leaf(w3))));
    if (need_grad) {
      t.backward(loss);
      t.write_param_grads(p);
    }
    return t.val(loss).data[0];
  };
  const auto report = hct::grad_check(fn, ps);
  CHECK_MESSAGE(report.ok, "checked " << report.checked << ", worst " << report.worst.name << "["
                                      << report.worst.index << "] analytic="
                                      << report.worst.analytic << " numeric="
                                      << report.worst.numeric << " rel=" << report.worst.rel_err);
}
