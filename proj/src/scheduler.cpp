#include "polygen/scheduler.hpp"

#include <cmath>
#include <unordered_map>

#include "polygen/errors.hpp"
#include "polygen/rng.hpp"

namespace polygen {

double schedule_p(const CurriculumSchedule& sched, std::size_t epoch) {
    if (sched.epochs == 0) throw ValidationError("schedule needs at least one epoch");
    if (!(sched.p_start >= 0.0 && sched.p_start <= 1.0) ||
        !(sched.p_end >= 0.0 && sched.p_end <= 1.0)) {
        throw ValidationError("schedule endpoints must lie in [0, 1]");
    }
    if (epoch >= sched.epochs) {
        throw ValidationError("epoch " + std::to_string(epoch) + " outside schedule of " +
                              std::to_string(sched.epochs));
    }
    if (sched.epochs == 1) return sched.p_end;
    const double t = static_cast<double>(epoch) / static_cast<double>(sched.epochs - 1);
    return sched.p_start + (sched.p_end - sched.p_start) * t;
}

std::vector<BatchPlan> plan_epoch(const std::vector<PairedSample>& dataset,
                                  const CurriculumSchedule& sched, std::size_t epoch,
                                  std::size_t batch_size, std::uint64_t seed,
                                  LeftoverQueue& queue) {
    if (dataset.empty()) throw ValidationError("empty dataset");
    if (batch_size == 0) throw ValidationError("batch size must be positive");

    std::unordered_map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (!seen.emplace(dataset[i].base.id, i).second) {
            throw ValidationError("duplicate sample id " + dataset[i].base.id);
        }
    }

    const double p = schedule_p(sched, epoch);
    const std::size_t h_full = static_cast<std::size_t>(std::lround(p * static_cast<double>(batch_size)));
    if (h_full >= batch_size) {
        throw ValidationError("hard-negative share leaves no positive slots at p=" +
                              std::to_string(p));
    }
    const std::size_t pos_full = batch_size - h_full;

    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(seed, epoch));
    rng.shuffle(order);

    std::vector<BatchPlan> plans;
    std::unordered_set<std::string> served;  // hn ids consumed this epoch
    std::size_t cursor = 0;
    std::size_t step = 0;
    while (cursor < order.size()) {
        const std::size_t take = std::min(pos_full, order.size() - cursor);
        BatchPlan plan;
        plan.epoch = epoch;
        plan.step = step++;
        plan.positive_ids.reserve(take);
        std::vector<const PairedSample*> members;
        members.reserve(take);
        for (std::size_t i = 0; i < take; ++i) {
            const PairedSample& s = dataset[order[cursor + i]];
            plan.positive_ids.push_back(s.base.id);
            members.push_back(&s);
        }
        cursor += take;

        const std::size_t h =
            take == pos_full ? h_full : (take * h_full) / pos_full;

        std::unordered_set<std::string> in_batch;
        while (plan.hn_ids.size() < h) {
            auto id = queue.pop();
            if (!id) break;
            served.insert(*id);
            in_batch.insert(*id);
            plan.hn_ids.push_back(std::move(*id));
        }
        for (const PairedSample* s : members) {
            if (plan.hn_ids.size() >= h) break;
            if (!s->negative) continue;
            const std::string& id = s->negative->id;
            if (in_batch.count(id) || queue.contains(id) || served.count(id)) continue;
            served.insert(id);
            in_batch.insert(id);
            plan.hn_ids.push_back(id);
        }
        for (const PairedSample* s : members) {
            if (!s->negative) continue;
            const std::string& id = s->negative->id;
            if (!in_batch.count(id) && !queue.contains(id) && !served.count(id)) {
                queue.push(id);
            }
        }
        plans.push_back(std::move(plan));
    }
    return plans;
}

double realized_hn_fraction(const std::vector<BatchPlan>& plans) {
    std::size_t pos = 0, hn = 0;
    for (const auto& p : plans) {
        pos += p.positive_ids.size();
        hn += p.hn_ids.size();
    }
    const std::size_t total = pos + hn;
    return total == 0 ? 0.0 : static_cast<double>(hn) / static_cast<double>(total);
}

UtilizationReport utilization_report(const std::vector<BatchPlan>& plans,
                                     const std::vector<PairedSample>& dataset,
                                     const LeftoverQueue& queue) {
    UtilizationReport report;
    for (const auto& s : dataset) {
        report.positive_counts[s.base.id] = 0;
        if (s.negative) report.hn_counts[s.negative->id] = 0;
    }
    for (const auto& plan : plans) {
        for (const auto& id : plan.positive_ids) ++report.positive_counts[id];
        for (const auto& id : plan.hn_ids) ++report.hn_counts[id];
    }
    report.end_queue_depth = queue.size();
    return report;
}

}  // namespace polygen
