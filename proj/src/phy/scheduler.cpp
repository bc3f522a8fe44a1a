#include "nbiot/scheduler.hpp"

#include <algorithm>

namespace nbiot {

const char* to_string(dl_assignment a)
{
  switch (a) {
    case dl_assignment::idle:
      return "idle";
    case dl_assignment::npss:
      return "npss";
    case dl_assignment::nsss:
      return "nsss";
    case dl_assignment::npbch:
      return "npbch";
    case dl_assignment::sib:
      return "sib";
    case dl_assignment::npdcch:
      return "npdcch";
    case dl_assignment::npdsch:
      return "npdsch";
    case dl_assignment::gap:
      return "gap";
  }
  return "?";
}

const char* to_string(ul_assignment a)
{
  return a == ul_assignment::npusch_ack ? "npusch_ack" : "none";
}

const char* to_string(alloc_policy p)
{
  return p == alloc_policy::static_alloc ? "static" : "greedy";
}

// --- plan ---------------------------------------------------------------------

void subframe_plan::reserve_anchor(uint64_t frame)
{
  const uint64_t first = frame * subframes_per_frame;
  extend_to(std::max(first, start_));
  const uint64_t idx = frame - start_ / subframes_per_frame;
  if (reserved_frames_[idx]) {
    return;
  }
  reserved_frames_[idx] = true;
  for (uint64_t sf = std::max(first, start_); sf < first + subframes_per_frame; ++sf) {
    const auto t = timing_counters::from_absolute(sf);
    dl_assignment a = dl_assignment::idle;
    if (t.subframe == 0) {
      a = dl_assignment::npbch;
    } else if (t.subframe == 5) {
      a = dl_assignment::npss;
    } else if (anchor_subframe(t)) {
      a = dl_assignment::nsss;
    } else if (sib1_subframe(t)) {
      a = dl_assignment::sib;
    } else {
      continue;
    }
    auto& e = entries_[sf - start_];
    if (e.dl == dl_assignment::npdcch || e.dl == dl_assignment::npdsch) {
      raise(error_code::collision, "anchor subframe already carries a grant");
    }
    e.dl = a;
    e.grant_id = -1;
  }
}

bool subframe_plan::frame_reserved(uint64_t frame) const
{
  const uint64_t first_frame = start_ / subframes_per_frame;
  return frame >= first_frame && frame - first_frame < reserved_frames_.size() && reserved_frames_[frame - first_frame];
}

void subframe_plan::extend_to(uint64_t abs_sf)
{
  if (abs_sf < start_) {
    raise(error_code::out_of_range, "subframe precedes the plan start");
  }
  if (abs_sf - start_ < entries_.size()) {
    return;
  }
  const uint64_t frame_end = (abs_sf / subframes_per_frame + 1) * subframes_per_frame;
  entries_.resize(frame_end - start_);
  const uint64_t first_frame = start_ / subframes_per_frame;
  const std::size_t old_frames = reserved_frames_.size();
  reserved_frames_.resize(abs_sf / subframes_per_frame - first_frame + 1, false);
  if (auto_reserve_) {
    for (std::size_t f = old_frames; f < reserved_frames_.size(); ++f) {
      reserve_anchor(first_frame + f);
    }
  }
}

plan_entry& subframe_plan::at(uint64_t abs_sf)
{
  extend_to(abs_sf);
  return entries_[abs_sf - start_];
}

plan_entry subframe_plan::get(uint64_t abs_sf) const
{
  if (abs_sf < start_ || abs_sf - start_ >= entries_.size()) {
    return {};
  }
  return entries_[abs_sf - start_];
}

std::string subframe_plan::to_csv() const
{
  std::string out = "hfn,sfn,subframe,assignment,grant_id,ul_assignment\n";
  for (uint64_t i = 0; i < entries_.size(); ++i) {
    const auto t = timing_counters::from_absolute(start_ + i);
    const auto& e = entries_[i];
    out += std::to_string(t.hfn) + ',' + std::to_string(t.sfn) + ',' + std::to_string(t.subframe) + ',' +
           to_string(e.dl) + ',' + (e.grant_id >= 0 ? std::to_string(e.grant_id) : std::string()) + ',' +
           to_string(e.ul) + '\n';
  }
  return out;
}

// --- scheduler ----------------------------------------------------------------

scheduler::scheduler(const scheduler_config& cfg, uint64_t start_subframe) : cfg_(cfg), plan_(start_subframe, !cfg.ignore_anchors)
{
  if (cfg_.sched_delay_sf < 4 || cfg_.sched_delay_sf > 63) {
    raise(error_code::invalid_config, "scheduling delay must be 4..63 subframes");
  }
  if (cfg_.harq_ack_delay_sf < 12 || cfg_.harq_ack_delay_sf > 63) {
    raise(error_code::invalid_config, "ACK delay must be 12..63 subframes");
  }
  if (cfg_.static_npdcch_subframe >= subframes_per_frame) {
    raise(error_code::invalid_config, "static grant subframe must be 0..9");
  }
}

bool scheduler::blocked(uint64_t abs_sf) const
{
  return plan_.get(abs_sf).dl != dl_assignment::idle;
}

void scheduler::acknowledge(uint32_t id)
{
  if (pending_ && *pending_ == id) {
    acked_ = true;
  }
}

void scheduler::release(uint32_t id)
{
  if (pending_ && *pending_ == id) {
    pending_.reset();
  }
}

std::optional<uint32_t> scheduler::pending(uint64_t now) const
{
  if (!pending_) {
    return std::nullopt;
  }
  const auto& g = plan_.grants()[*pending_];
  if (g.mode == rlc_mode::am && !acked_) {
    return pending_;
  }
  return now <= g.end() ? pending_ : std::nullopt;
}

uint64_t scheduler::next_opportunity(uint64_t now)
{
  uint64_t t = std::max(now, plan_.start());
  if (pending_) {
    t = std::max(t, plan_.grants()[*pending_].end() + 1);
  }
  for (;; ++t) {
    plan_.at(t);
    if (cfg_.policy == alloc_policy::static_alloc && t % subframes_per_frame != cfg_.static_npdcch_subframe) {
      continue;
    }
    if (!blocked(t)) {
      return t;
    }
  }
}

const planned_grant& scheduler::place(dl_grant g, uint64_t earliest, rlc_mode mode)
{
  if (pending(earliest)) {
    raise(error_code::no_capacity, "a HARQ process is already pending");
  }
  g.sched_delay_sf = cfg_.sched_delay_sf;
  g.harq_ack_delay_sf = mode == rlc_mode::am ? cfg_.harq_ack_delay_sf : 0;
  g.validate();

  planned_grant p;
  p.id = next_id_++;
  p.grant = g;
  p.mode = mode;
  p.npdcch = next_opportunity(earliest);
  for (uint64_t t = p.npdcch + cfg_.sched_delay_sf + 1; p.npdsch.size() < g.n_sf(); ++t) {
    plan_.at(t);
    if (!blocked(t)) {
      p.npdsch.push_back(t);
    }
  }
  plan_.at(p.npdcch) = {dl_assignment::npdcch, int64_t(p.id)};
  for (uint64_t t = p.npdcch + 1; t < p.npdsch.front(); ++t) {
    auto& e = plan_.at(t);
    if (e.dl == dl_assignment::idle) {
      e = {dl_assignment::gap, int64_t(p.id)};
    }
  }
  for (uint64_t t : p.npdsch) {
    auto& e = plan_.at(t);
    e.dl = dl_assignment::npdsch;
    e.grant_id = int64_t(p.id);
  }
  if (mode == rlc_mode::am) {
    p.ack = p.npdsch.back() + 1 + cfg_.harq_ack_delay_sf;
    auto& e = plan_.at(*p.ack);
    e.ul = ul_assignment::npusch_ack;
    e.ul_grant_id = int64_t(p.id);
  }
  pending_ = p.id;
  acked_ = false;
  plan_.add_grant(std::move(p));
  return plan_.grants().back();
}

const planned_grant& scheduler::schedule_um(dl_grant g, uint64_t earliest)
{
  return place(g, earliest, rlc_mode::um);
}

const planned_grant& scheduler::schedule_am(dl_grant g, uint64_t earliest)
{
  return place(g, earliest, rlc_mode::am);
}

const planned_grant& scheduler::schedule(const dl_grant& g, uint64_t earliest)
{
  return place(g, earliest, cfg_.mode);
}

void scheduler::run(uint64_t horizon_subframes, const dl_grant& g, bool ack_loss)
{
  const uint64_t stop = plan_.start() + horizon_subframes;
  uint64_t t = plan_.start();
  while (t < stop) {
    if (pending(t)) {
      break;
    }
    t = next_opportunity(t);
    if (t >= stop) {
      break;
    }
    const auto& p = schedule(g, t);
    if (p.ack && !ack_loss) {
      acknowledge(p.id);
    }
    t = p.end() + 1;
  }
  if (stop > plan_.start()) {
    plan_.at(stop - 1);
  }
}

double throughput_of(const subframe_plan& plan, double horizon_ms)
{
  if (!(horizon_ms > 0)) {
    return 0.0;
  }
  double bits = 0;
  for (const auto& g : plan.grants()) {
    if (double(g.npdsch.back() - plan.start()) < horizon_ms) {
      bits += g.grant.tbs();
    }
  }
  return bits / horizon_ms;
}

} // namespace nbiot
