#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "cln/baselines.hpp"
#include "cln/model.hpp"
#include "test_util.hpp"

using namespace cln;

namespace {

RelGraph path_graph(std::size_t n, std::size_t m = 2) {
  RelGraph g;
  g.features = Matrix(n, m);
  Rng rng(4);
  std::normal_distribution<double> gauss(0, 1);
  for (double& v : g.features.span()) v = gauss(rng);
  g.label_names = {"a", "b"};
  g.targets = Matrix(n, 2);
  g.observed.assign(n, 1);
  for (std::size_t i = 0; i < n; ++i) g.targets(i, i % 2) = 1.0;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("p" + std::to_string(i));
  g.set_nodes(ids);
  g.add_relation("next");
  std::vector<Tuple> ts;
  for (std::size_t i = 0; i + 1 < n; ++i) ts.push_back({i, i + 1, 0});
  g.set_tuples(ts);
  return g;
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  std::normal_distribution<double> gauss(0, 1);
  Matrix m(r, c);
  for (double& v : m.span()) v = gauss(rng);
  return m;
}

Vector random_vector(std::size_t n, Rng& rng) {
  std::normal_distribution<double> gauss(0, 1);
  Vector v(n);
  for (double& x : v.span()) x = gauss(rng);
  return v;
}

RelationalUnit random_unit(std::size_t out, std::size_t in, std::size_t rels, Rng& rng) {
  RelationalUnit u{random_matrix(out, in, rng), random_vector(out, rng), {}};
  for (std::size_t r = 0; r < rels; ++r) u.V.push_back(random_matrix(out, in, rng));
  return u;
}

ModelSpec small_spec(const RelGraph& g, ColumnKind col = ColumnKind::Highway, Sharing sh = Sharing::Shared,
                     std::size_t depth = 3, std::size_t width = 4) {
  ModelSpec s;
  s.column = col;
  s.sharing = sh;
  s.depth = depth;
  s.width = width;
  return spec_for(g, s);
}

}  // namespace

TEST(RelationalContext, TwoPointAverage) {
  RelGraph g;
  g.features = Matrix(3, 1);
  g.set_nodes({"a", "b", "c"});
  g.add_relation("r");
  g.set_tuples({{1, 0, 0}, {2, 0, 0}});
  const Matrix h{{0, 0}, {1, 3}, {3, 5}};
  EXPECT_EQ(relational_context(h, g, 0, 0, Pooling::Mean), (Vector{2, 4}));
  EXPECT_EQ(relational_context(h, g, 0, 0, Pooling::Sum), (Vector{4, 8}));
  EXPECT_EQ(relational_context(h, g, 0, 0, Pooling::Max), (Vector{3, 5}));
}

TEST(RelationalContext, SingleNeighborAndEmpty) {
  RelGraph g;
  g.features = Matrix(2, 1);
  g.set_nodes({"a", "b"});
  g.add_relation("r");
  g.set_tuples({{1, 0, 0}});
  const Matrix h{{9, 9, 9}, {-1.5, 2, 0.25}};
  for (Pooling p : {Pooling::Mean, Pooling::Sum, Pooling::Max}) {
    EXPECT_EQ(relational_context(h, g, 0, 0, p), (Vector{-1.5, 2, 0.25}));
    const Vector empty = relational_context(h, g, 1, 0, p);
    for (double v : empty.span()) {
      EXPECT_EQ(v, 0.0);
      EXPECT_FALSE(std::signbit(v));
    }
  }
}

TEST(RelationalContext, BruteForceOracle) {
  Rng rng(21);
  const std::size_t n = 30, k = 6;
  for (int trial = 0; trial < 200; ++trial) {
    RelGraph g;
    g.features = Matrix(n, 1);
    std::vector<std::string> names(n);
    for (std::size_t i = 0; i < n; ++i) names[i] = std::to_string(i);
    g.set_nodes(names);
    g.add_relation("r");
    std::vector<std::size_t> others(n - 1);
    std::iota(others.begin(), others.end(), std::size_t{1});
    std::shuffle(others.begin(), others.end(), rng);
    const std::size_t deg = 1 + static_cast<std::size_t>(trial % 7);
    std::vector<Tuple> ts;
    for (std::size_t d = 0; d < deg; ++d) ts.push_back({others[d], 0, 0});
    g.set_tuples(ts);
    const Matrix h = random_matrix(n, k, rng);
    const Vector mean = relational_context(h, g, 0, 0, Pooling::Mean);
    const Vector sum = relational_context(h, g, 0, 0, Pooling::Sum);
    const Vector mx = relational_context(h, g, 0, 0, Pooling::Max);
    for (std::size_t c = 0; c < k; ++c) {
      double s = 0, m = -1e300;
      for (std::size_t d = 0; d < deg; ++d) {
        s += h(others[d], c);
        m = std::max(m, h(others[d], c));
      }
      EXPECT_NEAR(mean[c], s / static_cast<double>(deg), 1e-12);
      EXPECT_NEAR(sum[c], s, 1e-12);
      EXPECT_EQ(mx[c], m);
    }
  }
}

TEST(CandidateHidden, ReducesToFeedforward) {
  Rng rng(2);
  RelationalUnit u = random_unit(3, 4, 2, rng);
  for (auto& v : u.V) v.fill(0.0);
  const Vector h = random_vector(4, rng);
  const std::vector<Vector> ctx{random_vector(4, rng), random_vector(4, rng)};
  EXPECT_EQ(candidate_hidden(h, ctx, u, 2.0), relu(affine(u.W, h, u.b)));
}

TEST(CandidateHidden, BiasOnly) {
  RelationalUnit u{Matrix(2, 3), Vector{-1, 2}, {Matrix(2, 3)}};
  EXPECT_EQ(candidate_hidden({5, 6, 7}, {Vector{1, 1, 1}}, u, 1.0), (Vector{0, 2}));
}

TEST(CandidateHidden, ScalarLoopOracle) {
  Rng rng(8);
  const std::size_t out = 5, in = 3, rels = 2;
  const RelationalUnit u = random_unit(out, in, rels, rng);
  const Vector h = random_vector(in, rng);
  const std::vector<Vector> ctx{random_vector(in, rng), random_vector(in, rng)};
  const double z = 2.0;
  const Vector got = candidate_hidden(h, ctx, u, z);
  for (std::size_t k = 0; k < out; ++k) {
    double pre = u.b[k];
    for (std::size_t c = 0; c < in; ++c) pre += u.W(k, c) * h[c];
    for (std::size_t r = 0; r < rels; ++r)
      for (std::size_t c = 0; c < in; ++c) pre += u.V[r](k, c) * ctx[r][c] / z;
    EXPECT_NEAR(got[k], std::max(0.0, pre), 1e-12);
  }
}

TEST(CandidateHidden, ShapeErrors) {
  Rng rng(1);
  const RelationalUnit u = random_unit(3, 4, 1, rng);
  EXPECT_THROW(candidate_hidden(Vector(3), {Vector(4)}, u, 1.0), ShapeError);
  EXPECT_THROW(candidate_hidden(Vector(4), {Vector(3)}, u, 1.0), ShapeError);
  EXPECT_THROW(candidate_hidden(Vector(4), {}, u, 1.0), ShapeError);
}

TEST(HighwayGate, ZeroParamsGiveHalf) {
  const RelationalUnit gate{Matrix(3, 3), Vector(3), {Matrix(3, 3)}};
  const GatePair a = highway_gate({1, -2, 3}, {Vector{4, 5, 6}}, gate, 1.0);
  EXPECT_EQ(a.carry_in, (Vector(3, 0.5)));
  EXPECT_EQ(a.carry_out, (Vector(3, 0.5)));
}

TEST(HighwayGate, StrongCarry) {
  const RelationalUnit gate{Matrix(2, 2), Vector(2, -5.0), {}};
  const GatePair a = highway_gate({0.3, 0.7}, {}, gate, 1.0);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(a.carry_in[k], 0.0066928509242848554, 1e-15);
}

TEST(HighwayGate, ComplementExact) {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const RelationalUnit gate = random_unit(4, 4, 2, rng);
    const GatePair a = highway_gate(random_vector(4, rng), {random_vector(4, rng), random_vector(4, rng)}, gate, 2.0);
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_EQ(a.carry_in[k] + a.carry_out[k], 1.0);
      EXPECT_GT(a.carry_in[k], 0.0);
      EXPECT_LT(a.carry_in[k], 1.0);
    }
  }
}

TEST(LayerForward, ForcedGates) {
  const RelGraph g = path_graph(5, 3);
  Rng rng(5);
  const RelationalUnit t = random_unit(3, 3, 1, rng);
  RelationalUnit open{Matrix(3, 3), Vector(3, 1000.0), {Matrix(3, 3)}};
  RelationalUnit shut{Matrix(3, 3), Vector(3, -1000.0), {Matrix(3, 3)}};
  const Matrix& h = g.features;
  const LayerOptions hw{Pooling::Mean, 1.0, true};
  const LayerOptions plain{Pooling::Mean, 1.0, false};
  EXPECT_EQ(layer_forward(h, g, t, &open, hw), layer_forward(h, g, t, nullptr, plain));
  EXPECT_EQ(layer_forward(h, g, t, &shut, hw), h);
}

TEST(LayerForward, PathGraphOracle) {
  const RelGraph g = path_graph(3, 2);
  Rng rng(6);
  const RelationalUnit t = random_unit(2, 2, 1, rng);
  const RelationalUnit gate = random_unit(2, 2, 1, rng);
  const double z = 1.0;
  LayerCache cache;
  const Matrix out = layer_forward(g.features, g, t, &gate, {Pooling::Mean, z, true}, &cache);
  for (std::size_t i = 0; i < 3; ++i) {
    // Node i pools only from i-1.
    double ctx[2] = {0, 0};
    if (i > 0)
      for (std::size_t c = 0; c < 2; ++c) ctx[c] = g.features(i - 1, c);
    for (std::size_t k = 0; k < 2; ++k) {
      double pre = t.b[k], gp = gate.b[k];
      for (std::size_t c = 0; c < 2; ++c) {
        pre += t.W(k, c) * g.features(i, c) + t.V[0](k, c) * ctx[c] / z;
        gp += gate.W(k, c) * g.features(i, c) + gate.V[0](k, c) * ctx[c] / z;
      }
      const double a = 1.0 / (1.0 + std::exp(-gp));
      EXPECT_NEAR(out(i, k), a * std::max(0.0, pre) + (1 - a) * g.features(i, k), 1e-12);
      EXPECT_NEAR(cache.gate(i, k), a, 1e-15);
    }
  }
}

TEST(LayerForward, HighwayWidthMismatchIsConfigError) {
  const RelGraph g = path_graph(3, 2);
  Rng rng(1);
  const RelationalUnit t = random_unit(3, 2, 1, rng);
  const RelationalUnit gate = random_unit(3, 2, 1, rng);
  EXPECT_THROW(layer_forward(g.features, g, t, &gate, {Pooling::Mean, 1.0, true}), ConfigError);
}

TEST(Forward, InputLayerAndProbabilities) {
  RandomGraphConfig rc;
  rc.n = 15;
  const RelGraph g = random_graph(rc);
  const ClnParams p = make_params(small_spec(g), 3);
  Rng rng(1);
  const ForwardResult fr = forward(g, p, Mode::Infer, rng);
  EXPECT_EQ(fr.cache.hidden[0], g.features);
  EXPECT_EQ(fr.cache.hidden.size(), p.spec.depth + 2);
  for (std::size_t a = 0; a < fr.prediction.probs.rows(); ++a) {
    const auto row = fr.prediction.probs.row(a);
    EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-9);
  }
  for (const auto& lc : fr.cache.layers) EXPECT_EQ(lc.mask.size(), 0u);
  for (std::size_t l = 1; l < fr.cache.layers.size(); ++l)
    for (double a : fr.cache.layers[l].gate.span()) {
      EXPECT_GT(a, 0.0);
      EXPECT_LT(a, 1.0);
    }

  rc.head = HeadKind::Multilabel;
  const RelGraph gm = random_graph(rc);
  const Prediction pm = predict(gm, make_params(small_spec(gm), 3));
  for (double v : pm.probs.span()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Forward, InferModeDrawsNoRandomness) {
  RandomGraphConfig rc;
  const RelGraph g = random_graph(rc);
  const ClnParams p = make_params(small_spec(g), 3);
  Rng a(1), b(1);
  forward(g, p, Mode::Infer, a);
  EXPECT_EQ(a, b);
}

TEST(Forward, DropoutPlacement) {
  RandomGraphConfig rc;
  const RelGraph g = random_graph(rc);
  Rng rng(3);
  const ForwardResult hw = forward(g, make_params(small_spec(g), 3), Mode::Train, rng);
  const std::size_t top = hw.cache.layers.size();
  for (std::size_t l = 1; l <= top; ++l) EXPECT_EQ(hw.cache.layers[l - 1].mask.size() != 0, l == 1 || l == top) << l;
  const ForwardResult fnn = forward(g, make_params(small_spec(g, ColumnKind::FNN), 3), Mode::Train, rng);
  for (const auto& lc : fnn.cache.layers) EXPECT_NE(lc.mask.size(), 0u);
  // T = 0: the single layer is both first and top, so both masks apply.
  const ForwardResult t0 = forward(g, make_params(small_spec(g, ColumnKind::Highway, Sharing::Shared, 0), 3),
                                   Mode::Train, rng, {0.5, 0.5, 0.5});
  ASSERT_EQ(t0.cache.layers.size(), 1u);
  for (double m : t0.cache.layers[0].mask.span()) EXPECT_TRUE(m == 0.0 || m == 4.0);
}

TEST(Forward, DepthZeroIsLinearHeadOnProjection) {
  RandomGraphConfig rc;
  rc.n = 10;
  const RelGraph g = random_graph(rc);
  const ClnParams p = make_params(small_spec(g, ColumnKind::Highway, Sharing::Shared, 0), 7);
  const Prediction pred = predict(g, p);
  for (std::size_t i = 0; i < g.entity_count(); ++i) {
    std::vector<Vector> ctx;
    for (std::size_t r = 0; r < g.relation_count(); ++r)
      ctx.push_back(relational_context(g.features, g, i, r, Pooling::Mean));
    const Vector h = candidate_hidden(Vector(std::vector<double>(g.features.row(i).begin(), g.features.row(i).end())),
                                      ctx, p.input, p.z);
    Vector logits = affine(p.head_W, h, p.head_b);
    const Vector probs = softmax(logits);
    for (std::size_t l = 0; l < probs.dim(); ++l) EXPECT_EQ(pred.probs(i, l), probs[l]);
  }
}

TEST(Forward, NoRelationsMatchesHwnNoRel) {
  RandomGraphConfig rc;
  rc.relations = 0;
  const RelGraph g = random_graph(rc);
  ModelSpec s;
  s.depth = 3;
  s.width = 4;
  const ClnParams p = make_params(hwn_norel_spec(g, s), 9);
  EXPECT_EQ(predict(g, p).probs, hwn_norel_predict(p, g).probs);
}

TEST(Forward, FourNodeLocality) {
  const RelGraph g = load_graph(testutil::four_node_paths());
  RelGraph bumped = g;
  bumped.features(0, 0) += 1.0;  // perturb e1
  for (std::size_t depth : {0u, 1u, 2u}) {
    const ClnParams p = make_params(small_spec(g, ColumnKind::Highway, Sharing::Shared, depth), 5);
    const Prediction a = predict(g, p);
    const Prediction b = predict(bumped, p);
    const bool changed = !std::equal(a.probs.row(3).begin(), a.probs.row(3).end(), b.probs.row(3).begin());
    // e1 reaches e4 in two hops; depth T sees T+1 hops.
    EXPECT_EQ(changed, depth + 1 >= 2) << "T=" << depth;
  }
}

TEST(Forward, PermutationEquivariance) {
  RandomGraphConfig rc;
  rc.n = 14;
  const RelGraph g = random_graph(rc);
  std::vector<std::size_t> perm(g.entity_count());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(17);
  std::shuffle(perm.begin(), perm.end(), rng);
  RelGraph h;
  h.head = g.head;
  h.label_names = g.label_names;
  h.features = Matrix(g.entity_count(), g.feature_dim());
  h.targets = Matrix(g.entity_count(), g.label_arity());
  h.observed.assign(g.entity_count(), 1);
  std::vector<std::string> ids(g.entity_count());
  for (std::size_t i = 0; i < g.entity_count(); ++i) {
    ids[perm[i]] = g.node_ids[i];
    std::copy(g.features.row(i).begin(), g.features.row(i).end(), h.features.row(perm[i]).begin());
  }
  h.set_nodes(ids);
  for (const auto& name : g.relation_names) h.add_relation(name);
  std::vector<Tuple> ts;
  for (const auto& t : g.tuples()) ts.push_back({perm[t.src], perm[t.dst], t.relation});
  h.set_tuples(ts);
  const ClnParams p = make_params(small_spec(g), 2);
  const Prediction a = predict(g, p);
  const Prediction b = predict(h, p);
  for (std::size_t i = 0; i < g.entity_count(); ++i)
    for (std::size_t l = 0; l < g.label_arity(); ++l) EXPECT_NEAR(a.probs(i, l), b.probs(perm[i], l), 1e-12);
}

TEST(ParamCount, SharingAndHandCount) {
  RandomGraphConfig rc;
  const RelGraph g = random_graph(rc);
  auto count = [&](ColumnKind col, Sharing sh, std::size_t depth) {
    return param_count(make_params(small_spec(g, col, sh, depth, 5), 1));
  };
  EXPECT_EQ(count(ColumnKind::Highway, Sharing::Shared, 2), count(ColumnKind::Highway, Sharing::Shared, 30));
  EXPECT_LT(count(ColumnKind::FNN, Sharing::PerLayer, 2), count(ColumnKind::FNN, Sharing::PerLayer, 3));
  // Gate set has the shape of one hidden layer: K*K + K + R*K*K.
  const std::size_t gate = 25 + 5 + 2 * 25;
  EXPECT_EQ(count(ColumnKind::Highway, Sharing::Shared, 4), count(ColumnKind::FNN, Sharing::Shared, 4) + gate);
  EXPECT_EQ(count(ColumnKind::Highway, Sharing::PerLayer, 4), count(ColumnKind::FNN, Sharing::PerLayer, 4) + 4 * gate);

  ModelSpec s;
  s.features = 10;
  s.relations = 1;
  s.labels = 2;
  s.width = 10;
  s.depth = 2;
  s.column = ColumnKind::FNN;
  s.sharing = Sharing::PerLayer;
  // input 100+10+100, two hidden layers of the same size, head 20+2.
  EXPECT_EQ(param_count(make_params(s, 1)), 652u);
}

TEST(ParamCount, UntiedGates) {
  RandomGraphConfig rc;
  const RelGraph g = random_graph(rc);
  ModelSpec s = small_spec(g, ColumnKind::Highway, Sharing::Shared, 3);
  s.tie_gates = false;
  const ClnParams p = make_params(s, 1);
  EXPECT_EQ(p.transforms.size(), 1u);
  EXPECT_EQ(p.gates.size(), 3u);
  for (const auto& gt : p.gates) EXPECT_EQ(gt.b, Vector(4, -1.0));
}

TEST(Backward, FiniteDifferenceSpotCheck) {
  RandomGraphConfig rc;
  const RelGraph g = random_graph(rc);
  SplitMask mask;
  mask.roles.assign(g.entity_count(), Role::Train);
  const ClnParams p = make_params(small_spec(g, ColumnKind::Highway, Sharing::Shared, 4, 5), 4);
  const GradCheckReport rep = grad_check(g, mask, p);
  for (const auto& b : rep.blocks) EXPECT_LT(b.max_rel_error, 1e-4) << b.name;
}

TEST(Backward, LinearModelAtNoiseFloor) {
  RandomGraphConfig rc;
  const RelGraph g = random_graph(rc);
  SplitMask mask;
  mask.roles.assign(g.entity_count(), Role::Train);
  const ClnParams p = make_params(small_spec(g, ColumnKind::FNN, Sharing::Shared, 0, 5), 4);
  GradCheckOptions o;
  o.floor = 1e-3;
  const GradCheckReport rep = grad_check(g, mask, p, o);
  for (const auto& b : rep.blocks) EXPECT_LT(b.max_rel_error, 1e-8) << b.name;
}

TEST(Backward, DuplicatedGraphGivesSameGradient) {
  RandomGraphConfig rc;
  rc.n = 8;
  const RelGraph g = random_graph(rc);
  RelGraph twice;
  twice.head = g.head;
  twice.label_names = g.label_names;
  const std::size_t n = g.entity_count();
  twice.features = Matrix(2 * n, g.feature_dim());
  twice.targets = Matrix(2 * n, g.label_arity());
  twice.observed.assign(2 * n, 1);
  std::vector<std::string> ids;
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < n; ++i) {
      ids.push_back(g.node_ids[i] + "_" + std::to_string(c));
      std::copy(g.features.row(i).begin(), g.features.row(i).end(), twice.features.row(c * n + i).begin());
      std::copy(g.targets.row(i).begin(), g.targets.row(i).end(), twice.targets.row(c * n + i).begin());
    }
  twice.set_nodes(ids);
  for (const auto& r : g.relation_names) twice.add_relation(r);
  std::vector<Tuple> ts;
  for (const auto& t : g.tuples()) {
    ts.push_back(t);
    ts.push_back({t.src + n, t.dst + n, t.relation});
  }
  twice.set_tuples(ts);

  const ClnParams p = make_params(small_spec(g, ColumnKind::Highway, Sharing::PerLayer, 3), 6);
  SplitMask m1, m2;
  m1.roles.assign(n, Role::Train);
  m2.roles.assign(2 * n, Role::Train);
  Rng r1(1), r2(1);
  const ClnParams g1 = backward(g, p, forward(g, p, Mode::Infer, r1).cache, m1);
  const ClnParams g2 = backward(twice, p, forward(twice, p, Mode::Infer, r2).cache, m2);
  const auto a = g1.const_blocks();
  const auto b = g2.const_blocks();
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t c = 0; c < a[k].size(); ++c) EXPECT_NEAR(a[k][c], b[k][c], 1e-12 * (1 + std::abs(a[k][c])));
}

TEST(Backward, StaleCacheIsConsistencyError) {
  RandomGraphConfig rc;
  const RelGraph g = random_graph(rc);
  SplitMask mask;
  mask.roles.assign(g.entity_count(), Role::Train);
  ClnParams p = make_params(small_spec(g), 1);
  Rng rng(1);
  const ActivationCache cache = forward(g, p, Mode::Train, rng).cache;
  EXPECT_NO_THROW(backward(g, p, cache, mask));
  p.head_b[0] += 1e-3;
  EXPECT_THROW(backward(g, p, cache, mask), ConsistencyError);
  p.head_b[0] -= 1e-3;
  const RelGraph other = g;
  EXPECT_THROW(backward(other, p, cache, mask), ConsistencyError);
}

TEST(Backward, HiddenLabelsNeverContribute) {
  RandomGraphConfig rc;
  rc.n = 10;
  RelGraph g = random_graph(rc);
  SplitMask mask;
  mask.roles.assign(g.entity_count(), Role::Train);
  mask.roles[3] = Role::Test;
  mask.roles[7] = Role::None;
  g.observed[7] = 0;
  const ClnParams p = make_params(small_spec(g), 2);
  Rng r1(1), r2(1);
  const ClnParams a = backward(g, p, forward(g, p, Mode::Infer, r1).cache, mask);
  RelGraph flipped = g;
  for (std::size_t i : {3u, 7u}) {
    auto row = flipped.targets.row(i);
    std::rotate(row.begin(), row.begin() + 1, row.end());
  }
  const ClnParams b = backward(flipped, p, forward(flipped, p, Mode::Infer, r2).cache, mask);
  EXPECT_EQ(a, b);
}
