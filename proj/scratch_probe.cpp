// Throwaway probe for gate-corpus design. Not part of the build.
#include <cstdio>
#include <map>
#include <vector>

#include "support/corpus.hpp"
#include "tlsrec/evaluation.hpp"
#include "tlsrec/model.hpp"
#include "tlsrec/training.hpp"

using namespace tlsrec;

struct RunStats {
  double hit = 0, map = 0;
  double home_hit = 0, page_hit = 0, front_hit = 0, menu_hit = 0;
  double gate_small = 0, gate_mid = 0, gate_large = 0;
  std::size_t best_epoch = 0;
};

static RunStats run_one(const DatasetSplit& split, ModelConfig model, Variant variant,
                        std::uint64_t seed, std::size_t epochs) {
  model.variant = variant;
  TrainConfig tc;
  tc.learning_rate = 0.003;
  tc.batch_size = 16;
  tc.epochs = epochs;
  tc.lambda_reg = 1e-6;
  tc.seed = seed;
  auto result = train(split, model, tc);

  RunStats s;
  s.best_epoch = result.best_epoch;
  auto report = evaluate(result.best_params, split.test, {20});
  s.hit = report.per_k.at(20).hit;
  s.map = report.per_k.at(20).map;

  std::size_t homes = 0, pages = 0, repeats = 0, menus = 0, gs_n = 0, gm_n = 0, gl_n = 0;
  for (const auto& inst : split.test) {
    auto fwd = forward(nullptr, result.best_params, inst, Mode::inference);
    auto ratings = score_all_items(result.best_params, fwd.z_user->values);
    auto ranking = rank_items(ratings);
    const double hit = hit_at_k(inst.target_items, ranking, 20);
    double gate_mean = 0;
    for (double g : fwd.trace.gate) gate_mean += g;
    gate_mean /= static_cast<double>(fwd.trace.gate.size());
    if (inst.delta_index == corpus::kGateLargeDelta) {  // home windows
      s.home_hit += hit;
      ++homes;
      s.gate_large += gate_mean;
      ++gl_n;
    } else if (inst.delta_index == corpus::kGateSmallDelta) {  // page repeats
      s.front_hit += hit;
      ++repeats;
      s.gate_small += gate_mean;
      ++gs_n;
    } else {  // mid bucket: menu + page advance
      s.gate_mid += gate_mean;
      ++gm_n;
      if (inst.target_items.size() == 1) {
        s.menu_hit += hit;
        ++menus;
      } else {
        s.page_hit += hit;
        ++pages;
      }
    }
  }
  if (homes) s.home_hit /= static_cast<double>(homes);
  if (pages) s.page_hit /= static_cast<double>(pages);
  if (repeats) s.front_hit /= static_cast<double>(repeats);
  if (menus) s.menu_hit /= static_cast<double>(menus);
  if (gs_n) s.gate_small /= static_cast<double>(gs_n);
  if (gm_n) s.gate_mid /= static_cast<double>(gm_n);
  if (gl_n) s.gate_large /= static_cast<double>(gl_n);
  return s;
}

int main() {
  auto ingest = corpus::gate_ingest(3);
  std::printf("instances=%zu sessions/user approx=%zu m=%zu users=%zu items=%zu\n",
              ingest.instances.size(), corpus::kGateBursts * corpus::kGateBurstLength,
              ingest.max_session_length, ingest.user_count, ingest.item_count);
  std::map<std::size_t, std::size_t> lags;
  for (const auto& inst : ingest.instances) ++lags[inst.delta_index];
  std::printf("lag buckets:");
  for (auto [d, n] : lags) std::printf(" %zu:%zu", d, n);
  std::printf("\n");

  auto split = corpus::gate_split(3, 11);
  std::printf("train=%zu val=%zu test=%zu\n", split.train.size(), split.validation.size(),
              split.test.size());

  ModelConfig model = corpus::gate_model();
  model.m = split.max_session_length;

  const std::size_t epochs = 250;
  int ga_wins = 0, ns_wins = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::map<Variant, RunStats> stats;
    for (Variant v : {Variant::full, Variant::gate_average, Variant::no_short_attention}) {
      stats[v] = run_one(split, model, v, seed, epochs);
      const auto& s = stats[v];
      std::printf(
          "seed=%llu %-18s hit=%.3f home=%.3f menu=%.3f page=%.3f rep=%.3f "
          "gate(d12)=%.3f gate(d20)=%.3f gate(d32)=%.3f best_epoch=%zu\n",
          static_cast<unsigned long long>(seed), variant_name(v), s.hit, s.home_hit,
          s.menu_hit, s.page_hit, s.front_hit, s.gate_small, s.gate_mid, s.gate_large,
          s.best_epoch);
    }
    if (stats[Variant::full].hit >= stats[Variant::gate_average].hit) ++ga_wins;
    if (stats[Variant::full].hit >= stats[Variant::no_short_attention].hit) ++ns_wins;
  }
  std::printf("full>=G+A in %d/5, full>=-S in %d/5\n", ga_wins, ns_wins);
  return 0;
}
