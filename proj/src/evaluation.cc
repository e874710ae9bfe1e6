#include "mixedlane/evaluation.h"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace mixedlane {

std::uint64_t eval_scenario_seed(std::uint64_t eval_seed, std::size_t scenario) {
  return mix_seed(eval_seed ^ 0xE7A1E7A1E7A1E7A1ULL, scenario);
}

std::vector<ScenarioResult> evaluate_policy(std::shared_ptr<const TrackSpec> track,
                                            const EnvConfig& env_config, const Network& net,
                                            const Eigen::VectorXd& params,
                                            const EvalOptions& options,
                                            const PlantFactory& plant,
                                            std::vector<TraceRow>* trace) {
  EnvConfig config = env_config;
  config.terminate_on_collision = false;
  config.max_episode_time = 0.0;
  const auto ticks = static_cast<std::uint64_t>(std::llround(options.duration_s / config.dt));

  std::vector<ScenarioResult> results;
  results.reserve(options.scenarios);
  for (std::size_t s = 0; s < options.scenarios; ++s) {
    std::unique_ptr<ExternalPlant> link = plant ? plant() : nullptr;
    EnvConfig scenario_config = config;
    if (link) scenario_config.agent_role = Role::kBridgedPlant;
    Env env(track, scenario_config, 0);
    if (link) env.attach_plant(link.get());

    ScenarioResult r;
    r.scenario_seed = eval_scenario_seed(options.seed, s);
    Observation obs = env.reset(r.scenario_seed);
    std::vector<TraceRow>* rows = (s == 0) ? trace : nullptr;
    if (rows) append_trace(env, nullptr, *rows);
    for (std::uint64_t t = 0; t < ticks; ++t) {
      const Observation one[1] = {obs};
      const PolicyOutput out = net.policy(params, encode(one));
      const ActionPair a = greedy_action(head_column(out.lane, 0), head_column(out.accel, 0));
      StepResult step = env.step(a);
      r.total_reward += step.reward;
      r.collisions += step.collision ? 1 : 0;
      if (rows) append_trace(env, &step, *rows);
      obs = std::move(step.observation);
    }
    results.push_back(r);
  }
  return results;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

SignTest sign_test_greater(std::span<const double> before, std::span<const double> after) {
  SignTest t;
  const std::size_t n = std::min(before.size(), after.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (after[i] > before[i]) {
      ++t.improved;
    } else if (after[i] < before[i]) {
      ++t.worsened;
    } else {
      ++t.ties;
    }
  }
  const std::size_t m = t.improved + t.worsened;
  // P(X >= improved), X ~ Binomial(m, 1/2), summed in log space.
  double p = 0.0;
  for (std::size_t k = t.improved; k <= m; ++k) {
    const double log_term = std::lgamma(m + 1.0) - std::lgamma(k + 1.0) -
                            std::lgamma(m - k + 1.0) - static_cast<double>(m) * std::log(2.0);
    p += std::exp(log_term);
  }
  t.p_value = m == 0 ? 1.0 : std::min(1.0, p);
  return t;
}

EvalReport make_report(std::vector<ScenarioResult> before, std::vector<ScenarioResult> after) {
  EvalReport r;
  std::vector<double> cb, ca, rb, ra, neg_cb, neg_ca;
  for (const auto& s : before) {
    cb.push_back(static_cast<double>(s.collisions));
    neg_cb.push_back(-static_cast<double>(s.collisions));
    rb.push_back(s.total_reward);
  }
  for (const auto& s : after) {
    ca.push_back(static_cast<double>(s.collisions));
    neg_ca.push_back(-static_cast<double>(s.collisions));
    ra.push_back(s.total_reward);
  }
  r.median_collisions_before = median(cb);
  r.median_collisions_after = median(ca);
  r.median_reward_before = median(rb);
  r.median_reward_after = median(ra);
  r.fewer_collisions = sign_test_greater(neg_cb, neg_ca);
  r.more_reward = sign_test_greater(rb, ra);
  r.before = std::move(before);
  r.after = std::move(after);
  return r;
}

void write_eval_csv(std::ostream& os, const EvalReport& report,
                    std::span<const std::string> header_comments) {
  for (const auto& line : header_comments) os << '#' << line << '\n';
  char buf[320];
  std::snprintf(buf, sizeof buf,
                "# median_collisions before=%.17g after=%.17g sign_test_p=%.17g\n"
                "# median_reward before=%.17g after=%.17g sign_test_p=%.17g\n",
                report.median_collisions_before, report.median_collisions_after,
                report.fewer_collisions.p_value, report.median_reward_before,
                report.median_reward_after, report.more_reward.p_value);
  os << buf;
  os << "scenario,scenario_seed,collisions_before,reward_before,collisions_after,reward_after\n";
  const std::size_t n = std::max(report.before.size(), report.after.size());
  for (std::size_t i = 0; i < n; ++i) {
    const ScenarioResult b = i < report.before.size() ? report.before[i] : ScenarioResult{};
    const ScenarioResult a = i < report.after.size() ? report.after[i] : ScenarioResult{};
    std::snprintf(buf, sizeof buf, "%zu,%llu,%zu,%.17g,%zu,%.17g\n", i,
                  static_cast<unsigned long long>(i < report.before.size() ? b.scenario_seed
                                                                            : a.scenario_seed),
                  b.collisions, b.total_reward, a.collisions, a.total_reward);
    os << buf;
  }
}

}  // namespace mixedlane
