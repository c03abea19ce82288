#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <thread>
#include <unordered_set>

#include "scrap/annotation/aggregate.hpp"
#include "scrap/annotation/audit.hpp"
#include "scrap/annotation/engine.hpp"
#include "scrap/annotation/split.hpp"
#include "scrap/common/error.hpp"
#include "support/fixtures.hpp"

using namespace scrap;
using namespace scrap::annotation;

TEST(Pseudonymize, DeterministicAndKeyed) {
  const auto a = pseudonymize("RC-000123", "salt-a");
  EXPECT_EQ(a, pseudonymize("RC-000123", "salt-a"));
  EXPECT_NE(a, pseudonymize("RC-000123", "salt-b"));
  EXPECT_EQ(a.rfind("bl-", 0), 0u);
  EXPECT_EQ(a.size(), 3u + 32u);
  EXPECT_EQ(a.find("000123"), std::string::npos);
  EXPECT_THROW(pseudonymize("RC-1", ""), ConfigError);
}

TEST(Pseudonymize, NoCollisionsOverHundredThousandIds) {
  std::unordered_set<std::string> seen;
  seen.reserve(100000);
  for (int i = 0; i < 100000; ++i) seen.insert(pseudonymize("RC-" + std::to_string(i), "s"));
  EXPECT_EQ(seen.size(), 100000u);
}

TEST(Route, Examples) {
  const std::vector<std::string> three{"a", "b", "c"};
  std::mt19937_64 rng(1);
  auto r = route(three, 3, rng);
  std::sort(r.begin(), r.end());
  EXPECT_EQ(r, three);

  std::vector<std::string> ten;
  for (int i = 0; i < 10; ++i) ten.push_back("r" + std::to_string(i));
  std::mt19937_64 r1(9), r2(9);
  EXPECT_EQ(route(ten, 3, r1), route(ten, 3, r2));

  EXPECT_THROW(route(std::vector<std::string>{"a", "b"}, 3, rng), ConfigError);
  EXPECT_THROW(route(std::vector<std::string>{"a", "a", "b"}, 3, rng), ConfigError);
}

TEST(Route, FrequenciesUniformWithinThreeSigma) {
  std::vector<std::string> pool;
  for (int i = 0; i < 10; ++i) pool.push_back("r" + std::to_string(i));
  std::map<std::string, int> hits;
  std::mt19937_64 rng(2024);
  constexpr int kTrials = 10000;
  for (int t = 0; t < kTrials; ++t) {
    const auto r = route(pool, 3, rng);
    EXPECT_EQ(std::set<std::string>(r.begin(), r.end()).size(), 3u);
    for (const auto& x : r) ++hits[x];
  }
  // each rater is a Bernoulli(3/10) per trial
  const double p = 0.3, mean = kTrials * p, sd = std::sqrt(kTrials * p * (1 - p));
  for (const auto& [rater, n] : hits) EXPECT_NEAR(n, mean, 3 * sd) << rater;
}

TEST(AggregateContinuous, Examples) {
  auto a = aggregate_continuous(std::vector<double>{3, 3, 3});
  EXPECT_DOUBLE_EQ(a.mean, 3.0);
  EXPECT_DOUBLE_EQ(a.std, 0.0);
  EXPECT_FALSE(a.flagged);

  a = aggregate_continuous(std::vector<double>{2, 3, 4});
  EXPECT_DOUBLE_EQ(a.mean, 3.0);
  EXPECT_NEAR(a.std, 0.81650, 5e-6);
  EXPECT_TRUE(a.flagged);

  a = aggregate_continuous(std::vector<double>{3.0, 3.2, 3.4});
  EXPECT_NEAR(a.mean, 3.2, 1e-12);
  EXPECT_NEAR(a.std, 0.16330, 5e-6);
  EXPECT_FALSE(a.flagged);

  // population σ 0.3266 stays below the bar that sample σ would sit on
  a = aggregate_continuous(std::vector<double>{2.6, 3.0, 3.4});
  EXPECT_NEAR(a.std, 0.32660, 5e-6);
  EXPECT_FALSE(a.flagged);
}

TEST(AggregateContinuous, Errors) {
  EXPECT_THROW(aggregate_continuous(std::vector<double>{1, 2}), DataError);
  EXPECT_THROW(aggregate_continuous(std::vector<double>{1, 2, 101}), DataError);
  EXPECT_THROW(aggregate_continuous(std::vector<double>{1, 2, -0.5}), DataError);
}

TEST(AggregateContinuous, PermutationInvariant) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 10);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> v(3 + t % 5);
    for (auto& x : v) x = u(rng);
    const auto base = aggregate_continuous(v);
    std::sort(v.begin(), v.end());
    do {
      const auto p = aggregate_continuous(v);
      EXPECT_NEAR(p.mean, base.mean, 1e-12);
      EXPECT_NEAR(p.std, base.std, 1e-12);
      EXPECT_EQ(p.flagged, base.flagged);
    } while (v.size() <= 5 && std::next_permutation(v.begin(), v.end()));
  }
}

TEST(AggregateContinuous, FlagMonotoneInOutlierDistance) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(1, 5);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> v{u(rng), u(rng), u(rng)};
    const double others = (v[1] + v[2]) / 2;
    bool was_flagged = false;
    for (double d = 0; d < 4; d += 0.05) {
      v[0] = others + d;
      const bool f = aggregate_continuous(v).flagged;
      EXPECT_TRUE(!was_flagged || f) << "flag dropped at distance " << d;
      was_flagged = f;
    }
  }
}

TEST(AggregateCategorical, Examples) {
  auto c = aggregate_categorical(std::vector<std::string>{"3A", "3A", "3A1"});
  ASSERT_TRUE(c.grade.has_value());
  EXPECT_EQ(*c.grade, "3A");

  c = aggregate_categorical(std::vector<std::string>{"3A", "3A1", "3AH"});
  EXPECT_TRUE(c.needs_tiebreak());

  c = aggregate_categorical(std::vector<std::string>{"3A", "3A", "3A1", "3A1"});
  EXPECT_TRUE(c.needs_tiebreak());
  EXPECT_EQ(c.votes.at("3A"), 2u);

  EXPECT_THROW(aggregate_categorical(std::vector<std::string>{"3A", "3A", "BRASS"}), DataError);
  EXPECT_THROW(aggregate_categorical(std::vector<std::string>{"3A", "3A"}), DataError);
}

TEST(Taxonomy, DefaultAndCustom) {
  GradeTaxonomy t;
  EXPECT_EQ(t.size(), 4u);
  EXPECT_EQ(t.index_of("3AH"), 2u);
  EXPECT_THROW(t.index_of("X"), DataError);
  EXPECT_THROW(GradeTaxonomy(std::vector<std::string>{"a", "a"}), ConfigError);
  EXPECT_EQ(GradeTaxonomy({"a", "b", "c", "d", "e"}).size(), 5u);
}

namespace {

const std::vector<std::string> kPool{"ann-1", "ann-2", "ann-3"};

struct EngineFixture {
  AuditLog audit;
  AnnotationEngine engine{AnnotationConfig{}, audit};

  std::string labeled(const std::string& car, std::vector<double> values,
                      std::vector<std::string> grades) {
    const auto blind = engine.register_railcar(car);
    const auto raters = engine.route(blind, kPool);
    for (std::size_t i = 0; i < raters.size(); ++i) engine.submit(raters[i], blind, values[i], grades[i]);
    return blind;
  }
};

}  // namespace

TEST(Engine, BlindnessBeforeAggregation) {
  EngineFixture f;
  const auto blind = f.engine.register_railcar("RC-1");
  EXPECT_EQ(blind, f.engine.register_railcar("RC-1"));
  const auto raters = f.engine.route(blind, kPool);
  f.engine.submit(raters[0], blind, 2.0, "3A");
  f.engine.submit(raters[1], blind, 2.2, "3A");

  EXPECT_THROW(f.engine.record(blind), BlindnessViolation);
  const auto own = f.engine.view_for_rater(raters[0], blind);
  ASSERT_TRUE(own.own.has_value());
  EXPECT_EQ(own.own->contamination, 2.0);
  const auto pending = f.engine.view_for_rater(raters[2], blind);
  EXPECT_TRUE(pending.assigned);
  EXPECT_FALSE(pending.own.has_value());
  EXPECT_FALSE(f.engine.view_for_rater("stranger", blind).assigned);

  EXPECT_THROW(f.engine.submit(raters[0], blind, 2.0, "3A"), StateError);
  EXPECT_THROW(f.engine.submit("stranger", blind, 2.0, "3A"), StateError);

  f.engine.submit(raters[2], blind, 2.4, "3A");
  const auto rec = f.engine.record(blind);
  EXPECT_NEAR(rec.continuous->mean, 2.2, 1e-12);
  EXPECT_EQ(rec.provenance, "consensus");
  EXPECT_TRUE(rec.final());
}

TEST(Engine, SubmitRejectsBadLabels) {
  EngineFixture f;
  const auto blind = f.engine.register_railcar("RC-1");
  const auto raters = f.engine.route(blind, kPool);
  EXPECT_THROW(f.engine.submit(raters[0], blind, 120, "3A"), DataError);
  EXPECT_THROW(f.engine.submit(raters[0], blind, 1, "BRASS"), DataError);
  EXPECT_THROW(f.engine.submit(raters[0], "bl-nope", 1, "3A"), DataError);
}

TEST(Engine, AdjudicationExamples) {
  EngineFixture f;
  const auto flagged = f.labeled("RC-1", {2, 3, 4}, {"3A", "3A", "3A"});
  EXPECT_EQ(f.engine.record(flagged).state, AdjudicationState::kPending);
  ASSERT_EQ(f.engine.flagged().size(), 1u);

  const auto before = f.audit.size();
  const auto rec = f.engine.adjudicate(flagged, {"senior-1", 2.8, std::nullopt});
  EXPECT_EQ(*rec.final_contamination, 2.8);
  EXPECT_EQ(rec.provenance, "adjudicated");
  EXPECT_DOUBLE_EQ(rec.continuous->mean, 3.0);  // original aggregate kept
  const auto added = f.audit.events_since(before);
  ASSERT_EQ(added.size(), 1u);
  EXPECT_EQ(added[0].action, "ADJUDICATE");
  EXPECT_EQ(added[0].actor, "senior-1");

  const auto tied = f.labeled("RC-2", {1, 1, 1}, {"3A", "3A1", "3AH"});
  EXPECT_TRUE(f.engine.record(tied).needs_tiebreak);
  EXPECT_THROW(f.engine.adjudicate(tied, {"senior-1", std::nullopt, std::nullopt}), DataError);
  EXPECT_EQ(*f.engine.adjudicate(tied, {"senior-1", std::nullopt, "3A1"}).final_grade, "3A1");

  const auto clean = f.labeled("RC-3", {1, 1, 1}, {"3A", "3A", "3A"});
  EXPECT_THROW(f.engine.adjudicate(clean, {"senior-1", 1.0, std::nullopt}), StateError);
  EXPECT_THROW(f.engine.adjudicate(flagged, {"senior-1", 2.0, std::nullopt}), StateError);
}

TEST(Engine, LabeledRowsAndSnapshot) {
  EngineFixture f;
  f.labeled("RC-2", {1, 1.2, 1.4}, {"3A", "3A", "3AH"});
  f.labeled("RC-1", {0.5, 0.5, 0.5}, {"3AH", "3AH", "3AH"});
  f.labeled("RC-3", {2, 3, 4}, {"3A", "3A", "3A"});  // pending, excluded
  const auto rows = f.engine.labeled_rows();
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].railcar_id, "RC-1");
  EXPECT_EQ(rows[1].grade, "3A");
  EXPECT_NEAR(rows[1].contamination, 1.2, 1e-12);

  scrap::testing::TempDir dir("ann");
  f.engine.save_snapshot(dir / "snap.json");
  AuditLog other_audit;
  AnnotationEngine other(AnnotationConfig{}, other_audit);
  other.load_snapshot(dir / "snap.json");
  EXPECT_EQ(other.labeled_rows().size(), 2u);
  EXPECT_EQ(other.final_count(), 2u);

  AnnotationConfig salty;
  salty.salt = "different";
  AnnotationEngine wrong(salty, other_audit);
  EXPECT_THROW(wrong.load_snapshot(dir / "snap.json"), ConfigError);
}

TEST(Audit, GaplessUnderConcurrentAppends) {
  scrap::testing::TempDir dir("audit");
  AuditLog log(dir / "audit.jsonl");
  constexpr int kThreads = 8, kPer = 1250;
  std::vector<std::thread> ts;
  for (int t = 0; t < kThreads; ++t) {
    ts.emplace_back([&, t] {
      for (int i = 0; i < kPer; ++i) log.append("w" + std::to_string(t), "TICK", {{"i", i}});
    });
  }
  for (auto& t : ts) t.join();
  const auto events = log.events();
  ASSERT_EQ(events.size(), static_cast<std::size_t>(kThreads * kPer));
  for (std::size_t i = 0; i < events.size(); ++i) EXPECT_EQ(events[i].sequence, i + 1);
  const auto back = AuditLog::load(dir / "audit.jsonl");
  ASSERT_EQ(back.size(), events.size());
  EXPECT_EQ(back.back().payload_digest, events.back().payload_digest);
}

TEST(Audit, LoadDetectsGap) {
  scrap::testing::TempDir dir("audit-gap");
  {
    AuditLog log(dir / "a.jsonl", [] { return std::int64_t{5}; });
    for (int i = 0; i < 3; ++i) log.append("x", "A", {{"i", i}});
  }
  std::ifstream in(dir / "a.jsonl");
  std::vector<std::string> lines;
  for (std::string s; std::getline(in, s);) lines.push_back(s);
  in.close();
  std::ofstream out(dir / "a.jsonl", std::ios::trunc);
  out << lines[0] << "\n" << lines[2] << "\n";
  out.close();
  EXPECT_THROW(AuditLog::load(dir / "a.jsonl"), IntegrityError);
}

TEST(Split, PartitionLawAndLeakage) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 200; ++t) {
    std::vector<std::string> cars;
    const std::size_t n = 3 + rng() % 400;
    for (std::size_t i = 0; i < n; ++i) cars.push_back("RC-" + std::to_string(i));
    const auto s = split_by_railcar(cars, reference_split_ratios(), rng());
    EXPECT_EQ(s.counts[0] + s.counts[1] + s.counts[2], n);
    EXPECT_EQ(s.railcar_partition.size(), n);
    std::set<std::string> seen;
    for (auto p : {Partition::kTrain, Partition::kVal, Partition::kTest}) {
      for (const auto& m : s.members(p)) EXPECT_TRUE(seen.insert(m).second) << m;
    }
    const auto r = reference_split_ratios();
    for (std::size_t i = 0; i < 3; ++i) EXPECT_LE(std::abs(double(s.counts[i]) - r[i] * n), 1.0);
  }
}

TEST(Split, ReferenceScale) {
  std::vector<std::string> cars;
  for (int i = 0; i < 2032; ++i) cars.push_back("RC-" + std::to_string(i));
  const auto s = split_by_railcar(cars, reference_split_ratios(), 1);
  EXPECT_NEAR(double(s.counts[0]), 1504.0, 1.0);
  EXPECT_NEAR(double(s.counts[1]), 305.0, 1.0);
  EXPECT_NEAR(double(s.counts[2]), 223.0, 1.0);
}

TEST(Split, DegenerateRatiosAndErrors) {
  std::vector<std::string> cars{"a", "b", "c", "d"};
  const auto s = split_by_railcar(cars, {1, 0, 0}, 3);
  EXPECT_EQ(s.counts[0], 4u);
  EXPECT_FALSE(s.warnings.empty());
  EXPECT_THROW(split_by_railcar(cars, {0.5, 0.6, 0}, 1), ConfigError);
  EXPECT_THROW(split_by_railcar(cars, {1.5, -0.5, 0}, 1), ConfigError);
  EXPECT_THROW(split_by_railcar({"a", "b"}, reference_split_ratios(), 1), DataError);
}

TEST(Split, Deterministic) {
  std::vector<std::string> cars;
  for (int i = 0; i < 50; ++i) cars.push_back("RC-" + std::to_string(i));
  auto shuffled = cars;
  std::reverse(shuffled.begin(), shuffled.end());
  EXPECT_EQ(split_by_railcar(cars, reference_split_ratios(), 5).railcar_partition,
            split_by_railcar(shuffled, reference_split_ratios(), 5).railcar_partition);
}
