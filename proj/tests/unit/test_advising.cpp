#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "eaa/advising.hpp"

using namespace eaa;

namespace {

TreeNode internal(NodeId id, std::size_t f, double thr, NodeId l, NodeId r) {
  return {id, InternalNode{f, thr, l, r}};
}
TreeNode leaf(NodeId id, ActionId a, double p) { return {id, LeafNode{a, p, {}}}; }

// Two features: "room" and "rubble". Tree splits on room only.
//   0: room <= 0.5 ? 1 : 2;   1: leaf action 3 (p 0.95);   2: leaf action 4 (p 0.6)
DecisionTreePolicy room_tree(std::vector<std::string> names = {"room", "flag"}) {
  return DecisionTreePolicy({internal(0, 0, 0.5, 1, 2), leaf(1, 3, 0.95), leaf(2, 4, 0.6)}, 0, std::move(names));
}

// Teacher agrees with the tree: action 3 in room 0, action 4 in room 1.
QTable matching_teacher() {
  QTable t(6);
  t.mutable_row({0.0, 0.0}) = {0, 0, 0, 5, 1, 0};
  t.mutable_row({1.0, 0.0}) = {0, 0, 0, 1, 5, 0};
  return t;
}

const std::vector<ActionId> kValid{0, 3, 4};

AdvisingConfig config(AdvisingMode mode, Heuristic h = EarlyAdvising{}, std::size_t budget = 10) {
  AdvisingConfig c;
  c.mode = mode;
  c.heuristic = h;
  c.budget = budget;
  return c;
}

}  // namespace

TEST(HeuristicFires, Early) {
  EXPECT_TRUE(heuristic_fires(EarlyAdvising{}, 0, 1, 2, 0.0));
  EXPECT_TRUE(heuristic_fires(EarlyAdvising{}, 99, 2, 2, -5.0));
}

TEST(HeuristicFires, Alternative) {
  EXPECT_FALSE(heuristic_fires(AlternativeAdvising{4}, 3, 0, 0, 0.0));
  EXPECT_TRUE(heuristic_fires(AlternativeAdvising{4}, 4, 0, 0, 0.0));
  EXPECT_TRUE(heuristic_fires(AlternativeAdvising{4}, 0, 0, 0, 0.0));
}

TEST(HeuristicFires, ImportanceIsStrict) {
  EXPECT_FALSE(heuristic_fires(ImportanceAdvising{1.0}, 0, 0, 1, 1.0));
  EXPECT_TRUE(heuristic_fires(ImportanceAdvising{1.0}, 0, 0, 1, 1.01));
}

TEST(HeuristicFires, MistakeCorrecting) {
  EXPECT_FALSE(heuristic_fires(MistakeCorrecting{1.0}, 0, 2, 2, 5.0));
  EXPECT_TRUE(heuristic_fires(MistakeCorrecting{1.0}, 0, 1, 2, 5.0));
  EXPECT_FALSE(heuristic_fires(MistakeCorrecting{1.0}, 0, 1, 2, 0.5));
}

TEST(ShouldStore, Examples) {
  EXPECT_TRUE(should_store(3, {3, 0.9}, 0.8));
  EXPECT_FALSE(should_store(3, {4, 0.99}, 0.8));
  EXPECT_FALSE(should_store(3, {3, 0.8}, 0.8));
}

TEST(TransferFeatures, SetsAndProjection) {
  const TransferFeatures tf({"a", "b", "src"}, {"a", "b", "tgt1", "tgt2"});
  EXPECT_EQ(tf.source_only(), std::vector<std::size_t>{2});
  EXPECT_EQ(tf.target_only(), (std::vector<std::size_t>{2, 3}));
  EXPECT_FALSE(tf.identical());
  EXPECT_EQ(tf.project(std::vector<double>{1, 2, 3, 4}), (StateFeatures{1, 2, 0}));
  EXPECT_THROW(tf.project(std::vector<double>{1, 2}), std::invalid_argument);
  EXPECT_TRUE(TransferFeatures({"a"}, {"a"}).identical());
}

TEST(TransferReject, IdenticalSetsNeverReject) {
  const auto tree = room_tree();
  const TransferFeatures same({"room", "flag"}, {"room", "flag"});
  for (double room : {0.0, 1.0}) {
    for (double flag : {0.0, 1.0}) {
      const std::vector<double> s{room, flag};
      EXPECT_FALSE(transfer_reject(extract_path(tree, s), s, same));
    }
  }
}

TEST(TransferReject, SourceOnlyFeatureOnPath) {
  // Source has "room" and "flag"; the target lacks "room".
  const auto tree = room_tree();
  const TransferFeatures tf({"room", "flag"}, {"flag"});
  const std::vector<double> src{0.0, 0.0};
  EXPECT_TRUE(transfer_reject(extract_path(tree, src), std::vector<double>{0.0}, tf));
}

TEST(TransferReject, ActiveTargetOnlyFeature) {
  const auto tree = room_tree();
  const TransferFeatures tf({"room", "flag"}, {"room", "flag", "rubble:r1"});
  const std::vector<double> src{0.0, 0.0};
  const auto path = extract_path(tree, src);
  EXPECT_TRUE(transfer_reject(path, std::vector<double>{0.0, 0.0, 1.0}, tf));
  EXPECT_FALSE(transfer_reject(path, std::vector<double>{0.0, 0.0, 0.0}, tf));
}

TEST(Session, StartValidates) {
  auto c = config(AdvisingMode::EAA);
  c.decay = 0.0;
  EXPECT_THROW(AdvisingSession::start(c), std::invalid_argument);
  c.decay = 1.0;
  c.storage_threshold = 1.5;
  EXPECT_THROW(AdvisingSession::start(c), std::invalid_argument);
  EXPECT_THROW(AdvisingSession::start(config(AdvisingMode::EAA, AlternativeAdvising{0})), std::invalid_argument);
  const auto s = AdvisingSession::start(config(AdvisingMode::EAA, EarlyAdvising{}, 7));
  EXPECT_EQ(s.remaining, 7u);
  EXPECT_EQ(s.budget, 7u);
}

TEST(EaaStep, ExhaustedBudgetAndEmptyMemoryActsOwn) {
  const auto tree = room_tree();
  const auto teacher = matching_teacher();
  auto session = AdvisingSession::start(config(AdvisingMode::EAA, EarlyAdvising{}, 0));
  auto partial = PartialTree::of(tree);
  Rng rng(1);
  const StateFeatures s{0.0, 0.0};
  const auto d = eaa_step(session, partial, teacher, tree, StepContext{s, kValid, 0, 0}, rng);
  EXPECT_EQ(d.source, DecisionSource::Own);
  EXPECT_EQ(d.action, 0u);
  EXPECT_FALSE(d.explanation);
}

TEST(EaaStep, FirstCallIsAdvisedAndStored) {
  const auto tree = room_tree();
  const auto teacher = matching_teacher();
  auto session = AdvisingSession::start(config(AdvisingMode::EAA, EarlyAdvising{}, 10));
  auto partial = PartialTree::of(tree);
  Rng rng(1);
  const StateFeatures s{0.0, 0.0};
  const auto d = eaa_step(session, partial, teacher, tree, StepContext{s, kValid, 0, 0}, rng);
  EXPECT_EQ(d.source, DecisionSource::Advised);
  EXPECT_EQ(d.action, 3u);
  ASSERT_TRUE(d.explanation);
  EXPECT_EQ(*d.explanation, extract_path(tree, s));
  EXPECT_EQ(session.remaining, 9u);
  EXPECT_EQ(session.advice_issued, 1u);
  EXPECT_EQ(query_partial(partial, s), predict(tree, s));
}

TEST(EaaStep, LowConfidenceAdviceIsNotStored) {
  const auto tree = room_tree();
  const auto teacher = matching_teacher();
  auto session = AdvisingSession::start(config(AdvisingMode::EAA));
  auto partial = PartialTree::of(tree);
  Rng rng(1);
  const StateFeatures s{1.0, 0.0};  // leaf probability 0.6 < 0.8
  const auto d = eaa_step(session, partial, teacher, tree, StepContext{s, kValid, 0, 0}, rng);
  EXPECT_EQ(d.source, DecisionSource::Advised);
  EXPECT_EQ(d.action, 4u);
  EXPECT_FALSE(d.explanation);
  EXPECT_TRUE(partial.empty());
}

TEST(EaaStep, StoredStateIsReusedAtIterationZero) {
  const auto tree = room_tree();
  const auto teacher = matching_teacher();
  auto session = AdvisingSession::start(config(AdvisingMode::EAA));
  session.decay = 0.9;
  auto partial = PartialTree::of(tree);
  const StateFeatures s{0.0, 0.0};
  store_path(partial, extract_path(tree, s));
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const auto d = eaa_step(session, partial, teacher, tree, StepContext{s, kValid, 0, 0}, rng);
    EXPECT_EQ(d.source, DecisionSource::Reused);
    EXPECT_EQ(d.action, predict(tree, s).action);
  }
  EXPECT_EQ(session.remaining, session.budget);
  EXPECT_EQ(session.advice_reused, 200u);
}

TEST(EaaStep, ReuseRateFollowsDecay) {
  const auto tree = room_tree();
  const auto teacher = matching_teacher();
  const StateFeatures s{0.0, 0.0};
  for (double gamma : {0.9, 0.99}) {
    for (std::size_t j : {0u, 10u, 100u}) {
      auto session = AdvisingSession::start(config(AdvisingMode::EAA, EarlyAdvising{}, 0));
      session.decay = gamma;
      session.iteration = j;
      auto partial = PartialTree::of(tree);
      store_path(partial, extract_path(tree, s));
      Rng rng(derive_seed(7, j));
      const int n = 4000;
      int reused = 0;
      for (int i = 0; i < n; ++i) {
        reused += eaa_step(session, partial, teacher, tree, StepContext{s, kValid, 0, 0}, rng).source ==
                  DecisionSource::Reused;
      }
      EXPECT_NEAR(reused / double(n), std::pow(gamma, double(j)), 0.05) << gamma << " " << j;
    }
  }
}

TEST(EaaStep, RejectionConsumesBudgetAndActsOwn) {
  const auto tree = room_tree();
  const auto teacher = matching_teacher();
  const TransferFeatures tf({"room", "flag"}, {"room", "flag", "rubble"});
  auto session = AdvisingSession::start(config(AdvisingMode::EAA), tf);
  auto partial = PartialTree::of(tree);
  Rng rng(1);
  const StateFeatures s{0.0, 0.0, 1.0};
  const auto d = eaa_step(session, partial, teacher, tree, StepContext{s, kValid, 0, 0}, rng);
  EXPECT_EQ(d.source, DecisionSource::Own);
  EXPECT_TRUE(d.rejected_advice);
  EXPECT_EQ(d.action, 0u);
  EXPECT_EQ(session.remaining, 9u);
  EXPECT_EQ(session.advice_rejected, 1u);
  EXPECT_TRUE(partial.empty());

  // Without active target-only features the same advice is taken and stored.
  const StateFeatures clear{0.0, 0.0, 0.0};
  const auto ok = eaa_step(session, partial, teacher, tree, StepContext{clear, kValid, 0, 0}, rng);
  EXPECT_EQ(ok.source, DecisionSource::Advised);
  EXPECT_FALSE(ok.rejected_advice);
}

TEST(EaaStep, AlwaysAcceptSkipsRejection) {
  const auto tree = room_tree();
  const auto teacher = matching_teacher();
  const TransferFeatures tf({"room", "flag"}, {"room", "flag", "rubble"});
  auto session = AdvisingSession::start(config(AdvisingMode::EAAAlwaysAccept), tf);
  auto partial = PartialTree::of(tree);
  Rng rng(1);
  const StateFeatures s{0.0, 0.0, 1.0};
  const auto d = eaa_step(session, partial, teacher, tree, StepContext{s, kValid, 0, 0}, rng);
  EXPECT_EQ(d.source, DecisionSource::Advised);
  EXPECT_FALSE(d.rejected_advice);
}

TEST(EaaStep, AlwaysAcceptEqualsEaaWithoutTransfer) {
  const auto tree = room_tree();
  const auto teacher = matching_teacher();
  auto a = AdvisingSession::start(config(AdvisingMode::EAA, EarlyAdvising{}, 5));
  auto b = AdvisingSession::start(config(AdvisingMode::EAAAlwaysAccept, EarlyAdvising{}, 5));
  a.iteration = b.iteration = 3;
  auto pa = PartialTree::of(tree);
  auto pb = PartialTree::of(tree);
  Rng ra(9);
  Rng rb(9);
  Rng states(4);
  for (int i = 0; i < 300; ++i) {
    const StateFeatures s{double(uniform_index(states, 2)), 0.0};
    const ActionId own = kValid[uniform_index(states, kValid.size())];
    const auto da = eaa_step(a, pa, teacher, tree, StepContext{s, kValid, std::size_t(i), own}, ra);
    const auto db = eaa_step(b, pb, teacher, tree, StepContext{s, kValid, std::size_t(i), own}, rb);
    EXPECT_EQ(da.source, db.source);
    EXPECT_EQ(da.action, db.action);
  }
  EXPECT_EQ(pa, pb);
}

TEST(EaaStep, ReusedActionsAgreeWithDistilledTree) {
  const auto tree = room_tree();
  const auto teacher = matching_teacher();
  auto session = AdvisingSession::start(config(AdvisingMode::EAA, EarlyAdvising{}, 3));
  auto partial = PartialTree::of(tree);
  Rng rng(5);
  Rng states(6);
  for (int i = 0; i < 500; ++i) {
    const StateFeatures s{double(uniform_index(states, 2)), double(uniform_index(states, 2))};
    const auto d = eaa_step(session, partial, teacher, tree, StepContext{s, kValid, std::size_t(i), 0}, rng);
    if (d.source == DecisionSource::Reused) EXPECT_EQ(d.action, predict(tree, s).action);
    EXPECT_EQ(session.advice_issued + session.remaining, session.budget);
  }
}

TEST(AaStep, ExhaustsAfterExactlyBudgetAdvisedSteps) {
  const auto teacher = matching_teacher();
  auto session = AdvisingSession::start(config(AdvisingMode::AA, EarlyAdvising{}, 25));
  std::size_t advised = 0;
  for (int i = 0; i < 100; ++i) {
    const StateFeatures s{0.0, 0.0};
    const auto d = aa_step(session, teacher, StepContext{s, kValid, std::size_t(i), 0});
    if (d.source == DecisionSource::Advised) {
      ++advised;
      EXPECT_EQ(d.action, 3u);
    } else {
      EXPECT_EQ(d.source, DecisionSource::Own);
      EXPECT_TRUE(session.exhausted());
    }
  }
  EXPECT_EQ(advised, 25u);
}

TEST(AaStep, NoneModeNeverAdvises) {
  const auto teacher = matching_teacher();
  auto session = AdvisingSession::start(config(AdvisingMode::None));
  const StateFeatures s{0.0, 0.0};
  EXPECT_EQ(aa_step(session, teacher, StepContext{s, kValid, 0, 4}).source, DecisionSource::Own);
  EXPECT_EQ(session.remaining, session.budget);
}

TEST(AaStep, FirstAdviceMatchesEaa) {
  const auto tree = room_tree();
  const auto teacher = matching_teacher();
  auto aa = AdvisingSession::start(config(AdvisingMode::AA));
  auto eaa = AdvisingSession::start(config(AdvisingMode::EAA));
  auto partial = PartialTree::of(tree);
  Rng rng(1);
  const StateFeatures s{1.0, 0.0};
  const auto a = aa_step(aa, teacher, StepContext{s, kValid, 0, 0});
  const auto e = eaa_step(eaa, partial, teacher, tree, StepContext{s, kValid, 0, 0}, rng);
  EXPECT_EQ(a.source, DecisionSource::Advised);
  EXPECT_EQ(a.action, e.action);
}

TEST(ReflectExplore, WithoutTransferActsLikeTeacherlessEaa) {
  const auto tree = room_tree();
  const auto teacher = matching_teacher();
  auto reflect = AdvisingSession::start(config(AdvisingMode::EAA, EarlyAdvising{}, 0));
  auto eaa = AdvisingSession::start(config(AdvisingMode::EAA, EarlyAdvising{}, 0));
  reflect.decay = eaa.decay = 0.95;
  reflect.iteration = eaa.iteration = 10;
  auto partial = PartialTree::of(tree);
  store_path(partial, extract_path(tree, std::vector<double>{0.0, 0.0}));
  auto partial_copy = partial;
  Rng r1(3);
  Rng r2(3);
  Rng states(8);
  for (int i = 0; i < 500; ++i) {
    const StateFeatures s{double(uniform_index(states, 2)), 0.0};
    const auto a = reflect_explore(reflect, partial, StepContext{s, kValid, 0, 4}, r1);
    const auto b = eaa_step(eaa, partial_copy, teacher, tree, StepContext{s, kValid, 0, 4}, r2);
    EXPECT_EQ(a.source, b.source);
    EXPECT_EQ(a.action, b.action);
  }
}

TEST(ReflectExplore, RejectedPathExploresUniformly) {
  const auto tree = room_tree();
  const TransferFeatures tf({"room", "flag"}, {"room", "flag", "rubble"});
  auto session = AdvisingSession::start(config(AdvisingMode::EAA, EarlyAdvising{}, 0), tf);
  auto partial = PartialTree::of(tree);
  store_path(partial, extract_path(tree, std::vector<double>{0.0, 0.0}));
  Rng rng(11);
  const StateFeatures s{0.0, 0.0, 1.0};
  std::map<ActionId, int> counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto d = reflect_explore(session, partial, StepContext{s, kValid, 0, 0}, rng);
    EXPECT_EQ(d.source, DecisionSource::Explored);
    EXPECT_TRUE(d.rejected_advice);
    ++counts[d.action];
  }
  for (ActionId a : kValid) EXPECT_NEAR(counts[a] / double(n), 1.0 / 3.0, 0.03);
  EXPECT_EQ(session.advice_rejected, std::size_t(n));
}

TEST(ReflectExplore, AlwaysAcceptReusesRejectablePaths) {
  const auto tree = room_tree();
  const TransferFeatures tf({"room", "flag"}, {"room", "flag", "rubble"});
  auto session = AdvisingSession::start(config(AdvisingMode::EAAAlwaysAccept, EarlyAdvising{}, 0), tf);
  auto partial = PartialTree::of(tree);
  store_path(partial, extract_path(tree, std::vector<double>{0.0, 0.0}));
  Rng rng(11);
  const StateFeatures s{0.0, 0.0, 1.0};
  const auto d = reflect_explore(session, partial, StepContext{s, kValid, 0, 0}, rng);
  EXPECT_EQ(d.source, DecisionSource::Reused);
  EXPECT_EQ(d.action, 3u);
}

TEST(Names, Stable) {
  EXPECT_EQ(heuristic_name(EarlyAdvising{}), "early");
  EXPECT_EQ(heuristic_name(MistakeCorrecting{}), "mistake_correcting");
  EXPECT_EQ(source_name(DecisionSource::Explored), "explored");
}
