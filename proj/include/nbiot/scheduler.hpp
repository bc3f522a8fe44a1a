#pragma once

#include "nbiot/dl_channels.hpp"
#include "nbiot/rate_model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace nbiot {

enum class dl_assignment : uint8_t { idle, npss, nsss, npbch, sib, npdcch, npdsch, gap };
enum class ul_assignment : uint8_t { none, npusch_ack };

const char* to_string(dl_assignment a);
const char* to_string(ul_assignment a);

inline bool is_anchor(dl_assignment a)
{
  return a == dl_assignment::npss || a == dl_assignment::nsss || a == dl_assignment::npbch || a == dl_assignment::sib;
}

struct plan_entry {
  dl_assignment dl = dl_assignment::idle;
  int64_t grant_id = -1;
  ul_assignment ul = ul_assignment::none;
  int64_t ul_grant_id = -1;
};

/// A downlink assignment placed in the plan. Subframes are absolute subframe counts.
struct planned_grant {
  uint32_t id = 0;
  dl_grant grant;
  rlc_mode mode = rlc_mode::um;
  uint64_t npdcch = 0;
  std::vector<uint64_t> npdsch;
  std::optional<uint64_t> ack;

  /// Last subframe the HARQ process occupies.
  uint64_t end() const { return ack ? *ack : npdsch.back(); }
};

/// Per-subframe downlink / uplink occupancy from a start subframe onward.
class subframe_plan
{
public:
  /// With auto_reserve, every frame the plan grows into gets its anchor subframes.
  explicit subframe_plan(uint64_t start_subframe = 0, bool auto_reserve = true)
      : start_(start_subframe), auto_reserve_(auto_reserve)
  {
  }

  uint64_t start() const { return start_; }
  /// Subframes currently covered, from start(); always whole frames past the start.
  uint64_t size() const { return entries_.size(); }

  /// Marks NPBCH / NPSS / NSSS / SIB1 of an absolute frame number. Idempotent; throws collision
  /// if a grant already sits on one of those subframes.
  void reserve_anchor(uint64_t frame);
  bool frame_reserved(uint64_t frame) const;

  /// Entry of an absolute subframe; extends the plan as needed.
  plan_entry& at(uint64_t abs_sf);
  /// Read-only view; subframes outside the plan read as idle.
  plan_entry get(uint64_t abs_sf) const;

  void add_grant(planned_grant g) { grants_.push_back(std::move(g)); }
  const std::vector<planned_grant>& grants() const { return grants_; }

  /// Columns hfn, sfn, subframe, assignment, grant_id, ul_assignment.
  std::string to_csv() const;

private:
  void extend_to(uint64_t abs_sf);

  uint64_t start_;
  bool auto_reserve_;
  std::vector<plan_entry> entries_;
  std::vector<bool> reserved_frames_;
  std::vector<planned_grant> grants_;
};

enum class alloc_policy : uint8_t { static_alloc, greedy };

const char* to_string(alloc_policy p);

struct scheduler_config {
  alloc_policy policy = alloc_policy::static_alloc;
  rlc_mode mode = rlc_mode::um;
  /// Hypothetical: place grants as if no anchor subframes existed.
  bool ignore_anchors = false;
  unsigned sched_delay_sf = grant_gap_subframes;
  unsigned harq_ack_delay_sf = ack_gap_subframes;
  /// Downlink subframe carrying the grant under the static policy.
  unsigned static_npdcch_subframe = 1;
};

class scheduler
{
public:
  explicit scheduler(const scheduler_config& cfg = {}, uint64_t start_subframe = 0);

  const scheduler_config& config() const { return cfg_; }
  const subframe_plan& plan() const { return plan_; }

  /// Grant followed by its NPDSCH, no earlier than `earliest`. Throws no_capacity while a HARQ
  /// process is pending.
  const planned_grant& schedule_um(dl_grant g, uint64_t earliest);
  /// Same, plus the NPUSCH ACK harq_ack_delay_sf subframes after the last NPDSCH subframe.
  const planned_grant& schedule_am(dl_grant g, uint64_t earliest);
  /// Dispatches on the configured mode.
  const planned_grant& schedule(const dl_grant& g, uint64_t earliest);

  /// Earliest subframe at which the next grant could be placed.
  uint64_t next_opportunity(uint64_t now);

  /// Processes the ACK of an AM grant; clears the HARQ process.
  void acknowledge(uint32_t id);
  /// Takes effect from the next placement.
  void set_policy(alloc_policy p) { cfg_.policy = p; }
  /// Gives up on an AM grant whose ACK never arrived so the block can be sent again.
  void release(uint32_t id);
  /// Pending HARQ process at `now`: an AM grant until acknowledged, a UM grant until its last NPDSCH subframe.
  std::optional<uint32_t> pending(uint64_t now) const;

  /// Saturated traffic until `horizon` subframes after start; every ACK arrives unless ack_loss.
  void run(uint64_t horizon_subframes, const dl_grant& g, bool ack_loss = false);

private:
  const planned_grant& place(dl_grant g, uint64_t earliest, rlc_mode mode);
  bool blocked(uint64_t abs_sf) const;

  scheduler_config cfg_;
  subframe_plan plan_;
  uint32_t next_id_ = 0;
  std::optional<uint32_t> pending_;
  bool acked_ = false;
};

/// Payload bits whose NPDSCH completed within horizon_ms of the plan start, per millisecond.
double throughput_of(const subframe_plan& plan, double horizon_ms);

} // namespace nbiot
