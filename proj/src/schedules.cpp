#include "streampca/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace streampca {

namespace {

// Ceiling that ignores floating-point noise around exact integers
// (4 * 0.3 / (0.01 * 0.25) must give 480, not 481).
std::int64_t ceil_count(double x) {
    if (!std::isfinite(x) || x > 9.0e18) throw std::invalid_argument("schedule: phase length overflows");
    const double r = std::round(x);
    if (std::abs(x - r) <= 1e-9 * std::max(1.0, std::abs(x))) return static_cast<std::int64_t>(r);
    return static_cast<std::int64_t>(std::ceil(x));
}

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("schedule: " + what);
}

double resolve_log(const ScheduleConstants& c, int d, double p, double scale) {
    if (c.log_multiplier) {
        require(*c.log_multiplier > 0.0, "log_multiplier must be positive");
        return *c.log_multiplier;
    }
    return std::max(1.0, std::log(static_cast<double>(d) / (p * scale)));
}

double resolve_warm(const ScheduleConstants& c, int d, int k, double p) {
    if (c.warm_log) {
        require(*c.warm_log > 0.0, "warm_log must be positive");
        return *c.warm_log;
    }
    const double xi = static_cast<double>(d) * k / (p * p) * std::log(static_cast<double>(d) / p);
    return xi > std::exp(1.0) ? std::log(xi) : 1.0;
}

void push(Schedule& s, std::int64_t start, std::int64_t end, RateRule rule) {
    if (end < start) return;
    s.segments.push_back(Segment{start, end, rule});
}

// Three-phase warm start / plateau / harmonic schedule shared by the
// gap-dependent and gap-free variants.
Schedule three_phase(std::int64_t t0, std::int64_t t1, std::int64_t tail, double scale, double log_mult,
                     double warm, const ScheduleConstants& c) {
    Schedule s;
    s.t0 = t0;
    s.scale = scale;
    s.log_multiplier = log_mult;
    s.warm_log = warm;
    s.constants = c;
    const double ce = c.c_eta / scale;
    push(s, 1, t0, {RateKind::constant, ce * warm / static_cast<double>(t0), 0});
    if (c.keep_plateau) {
        s.t1 = t1;
        push(s, t0 + 1, t0 + t1, {RateKind::constant, ce / static_cast<double>(t1), 0});
        push(s, t0 + t1 + 1, t0 + t1 + tail, {RateKind::harmonic, ce, t0});
        s.total = t0 + t1 + tail;
    } else {
        s.t1 = 0;
        push(s, t0 + 1, t0 + tail, {RateKind::harmonic, ce, t0 - t1});
        s.total = t0 + tail;
    }
    return s;
}

}  // namespace

double Schedule::eta(std::int64_t t) const { return eta_at(*this, t); }

std::vector<std::int64_t> Schedule::boundaries() const {
    std::vector<std::int64_t> out;
    for (std::size_t i = 1; i < segments.size(); ++i) out.push_back(segments[i].start);
    return out;
}

double eta_at(const Schedule& schedule, std::int64_t t) {
    if (t < 1 || t > schedule.total)
        throw std::out_of_range("eta_at: t=" + std::to_string(t) + " outside [1, " +
                                std::to_string(schedule.total) + "]");
    const auto it = std::upper_bound(schedule.segments.begin(), schedule.segments.end(), t,
                                     [](std::int64_t v, const Segment& s) { return v < s.start; });
    return std::prev(it)->rule.at(t);
}

double integrate_eta(const Schedule& schedule, std::int64_t a, std::int64_t b) {
    double sum = 0.0;
    for (const auto& seg : schedule.segments) {
        const std::int64_t lo = std::max(a, seg.start);
        const std::int64_t hi = std::min(b, seg.end);
        if (lo > hi) continue;
        if (seg.rule.kind == RateKind::constant) {
            sum += seg.rule.c * static_cast<double>(hi - lo + 1);
        } else {
            for (std::int64_t t = hi; t >= lo; --t) sum += seg.rule.at(t);
        }
    }
    return sum;
}

Schedule with_total(Schedule schedule, std::int64_t total) {
    require(total >= 0, "total must be nonnegative");
    auto& segs = schedule.segments;
    while (!segs.empty() && segs.back().start > total) segs.pop_back();
    if (!segs.empty()) segs.back().end = total;
    schedule.total = total;
    return schedule;
}

Schedule gap_dep_schedule(const GapDependentParams& p, const ScheduleConstants& c) {
    require(p.k >= 1 && p.d >= p.k, "need 1 <= k <= d");
    require(p.gap > 0.0 && p.gap <= 1.0 / p.k, "gap must lie in (0, 1/k]");
    require(p.lambda_sum > 0.0 && p.lambda_sum <= 1.0, "Lambda must lie in (0, 1]");
    require(p.epsilon > 0.0 && p.epsilon <= 1.0, "epsilon must lie in (0, 1]");
    require(p.p > 0.0 && p.p <= 1.0, "p must lie in (0, 1]");
    require(c.c_t0 > 0.0 && c.c_t1 > 0.0 && c.c_eta > 0.0, "constants must be positive");

    const double L = resolve_log(c, p.d, p.p, p.gap);
    const double g2 = p.gap * p.gap;
    const auto t0 = ceil_count(c.c_t0 * p.k * p.lambda_sum * L / (g2 * p.p * p.p));
    const auto t1 = ceil_count(c.c_t1 * p.lambda_sum * L / g2);
    const auto tail = ceil_count(c.c_t1 * p.lambda_sum * L / (g2 * p.epsilon));
    return three_phase(t0, t1, tail, p.gap, L, resolve_warm(c, p.d, p.k, p.p), c);
}

namespace {
void check_gap_free(const GapFreeParams& p, const ScheduleConstants& c) {
    require(p.k >= 1 && p.d >= p.k, "need 1 <= k <= d");
    require(p.rho > 0.0 && p.rho < 1.0, "rho must lie in (0, 1)");
    require(p.lambda1 > 0.0 && p.lambda1 <= 1.0, "Lambda1 must lie in (0, 1]");
    require(p.lambda2 >= 0.0 && p.lambda2 <= 1.0, "Lambda2 must lie in [0, 1]");
    require(p.epsilon > 0.0 && p.epsilon <= 1.0, "epsilon must lie in (0, 1]");
    require(p.p > 0.0 && p.p <= 1.0, "p must lie in (0, 1]");
    require(c.c_t0 > 0.0 && c.c_t1 > 0.0 && c.c_eta > 0.0, "constants must be positive");
}
}  // namespace

Schedule gap_free_schedule(const GapFreeParams& p, const ScheduleConstants& c) {
    check_gap_free(p, c);
    const double L = resolve_log(c, p.d, p.p, p.rho);
    const double r2 = p.rho * p.rho;
    const double lead = std::min(1.0, p.lambda1 + p.k * p.lambda2 / r2);
    const auto t0 = ceil_count(c.c_t0 * p.k * lead * L / (r2 * p.p * p.p));
    const auto t1 = ceil_count(c.c_t1 * (p.lambda1 + p.lambda2) * L / r2);
    const auto tail = ceil_count(c.c_t1 * (p.lambda1 + p.lambda2) * L / (r2 * p.epsilon));
    return three_phase(t0, t1, tail, p.rho, L, resolve_warm(c, p.d, p.k, p.p), c);
}

int ojapp_epoch_count(int k) {
    require(k >= 1, "k must be >= 1");
    int s = 0;
    while ((std::int64_t{1} << s) < static_cast<std::int64_t>(k) + 1) ++s;
    return s;
}

std::vector<int> ojapp_column_counts(int k) {
    const int s = ojapp_epoch_count(k);
    std::vector<int> counts;
    int used = 0;
    for (int i = 1; i < s; ++i) {
        const int r = (k >> (i - 1)) - (k >> i);
        counts.push_back(r);
        used += r;
    }
    counts.push_back(k - used);
    return counts;
}

OjaPPPlan ojapp_plan(const GapFreeParams& p, const ScheduleConstants& c) {
    if (p.k < 1) throw std::invalid_argument("ojapp_plan: k must be >= 1");
    check_gap_free(p, c);
    require(c.epoch_multiplier >= 1, "epoch_multiplier must be >= 1");
    const double L = resolve_log(c, p.d, p.p, p.rho);
    const double r2 = p.rho * p.rho;
    const double p2 = p.p * p.p;
    const auto t0 = ceil_count(c.c_t0 * (p.lambda1 + p.lambda2 / p2) * L / (r2 * p2));
    const auto t1 = ceil_count(c.c_t1 * (p.lambda1 + p.lambda2) * L / r2);
    const auto tail = ceil_count(c.c_t1 * (p.lambda1 + p.lambda2) * L / (r2 * p.epsilon));

    const std::vector<int> cols = ojapp_column_counts(p.k);
    const auto s = static_cast<std::int64_t>(cols.size());
    const std::int64_t span = c.epoch_multiplier * t0;
    const double ce = c.c_eta / p.rho;
    const double warm = resolve_warm(c, p.d, p.k, p.p);
    const double ce_warm = ce * warm / static_cast<double>(t0);

    OjaPPPlan plan;
    Schedule& sch = plan.schedule;
    sch.t0 = t0;
    sch.t1 = t1;
    sch.scale = p.rho;
    sch.log_multiplier = L;
    sch.warm_log = warm;
    sch.constants = c;
    sch.total = s * span + t1 + tail;

    if (c.collapse_epoch_rates) {
        push(sch, 1, s * span, {RateKind::constant, ce_warm, 0});
    } else {
        for (std::int64_t i = 0; i < s; ++i) {
            push(sch, i * span + 1, i * span + t0, {RateKind::constant, ce_warm, 0});
            push(sch, i * span + t0 + 1, (i + 1) * span, {RateKind::harmonic, ce, i * span});
        }
    }
    push(sch, s * span + 1, s * span + t1, {RateKind::constant, ce / static_cast<double>(t1), 0});
    push(sch, s * span + t1 + 1, sch.total, {RateKind::harmonic, ce, s * span});

    for (std::int64_t i = 0; i < s; ++i) {
        const std::int64_t len = i + 1 < s ? span : sch.total - (s - 1) * span;
        plan.epochs.push_back(Epoch{len, cols[static_cast<std::size_t>(i)]});
    }
    return plan;
}

OjaPPPlan with_total(OjaPPPlan plan, std::int64_t total) {
    plan.schedule = with_total(std::move(plan.schedule), total);
    // Epochs past `total` keep their columns with zero length, so the sketch
    // width stays k however short the run is.
    std::int64_t start = 0;
    for (std::size_t i = 0; i < plan.epochs.size(); ++i) {
        const bool last = i + 1 == plan.epochs.size();
        const std::int64_t room = std::max<std::int64_t>(total - start, 0);
        plan.epochs[i].length = last ? room : std::min(plan.epochs[i].length, room);
        start += plan.epochs[i].length;
    }
    return plan;
}

}  // namespace streampca
