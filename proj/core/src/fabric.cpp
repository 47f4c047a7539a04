#include "kkm/fabric.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <exception>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>
#include <tuple>

namespace kkm::fabric {

// ---------------------------------------------------------------------------
// Grid and groups

Grid Grid::one_d(int ranks) {
  if (ranks < 1) throw FabricError("grid needs at least one rank");
  return Grid(ranks, ranks, Layout::one_d);
}

Grid Grid::two_d(int ranks) {
  if (ranks < 1) throw FabricError("grid needs at least one rank");
  const int q = static_cast<int>(std::lround(std::sqrt(ranks)));
  if (q * q != ranks) {
    throw FabricError("two-dimensional grid needs a perfect-square rank count, got " +
                      std::to_string(ranks));
  }
  return Grid(ranks, q, Layout::two_d_column_major);
}

int Grid::rank_at(int row, int col) const {
  if (layout_ != Layout::two_d_column_major) {
    throw FabricError("rank_at is only defined on a 2D grid");
  }
  if (row < 0 || row >= side_ || col < 0 || col >= side_) {
    throw FabricError("grid position out of range");
  }
  return row + col * side_;
}

int Grid::grid_row(int rank) const {
  if (layout_ != Layout::two_d_column_major) {
    throw FabricError("grid_row is only defined on a 2D grid");
  }
  return rank % side_;
}

int Grid::grid_col(int rank) const {
  if (layout_ != Layout::two_d_column_major) {
    throw FabricError("grid_col is only defined on a 2D grid");
  }
  return rank / side_;
}

std::string_view to_string(GroupKind kind) {
  switch (kind) {
    case GroupKind::world: return "world";
    case GroupKind::row: return "row";
    case GroupKind::column: return "column";
  }
  return "?";
}

Group::Group(GroupKind kind, int index, std::vector<int> members)
    : kind_(kind), index_(index), members_(std::move(members)) {
  if (members_.empty()) throw FabricError("empty group");
  std::sort(members_.begin(), members_.end());
  if (std::adjacent_find(members_.begin(), members_.end()) != members_.end()) {
    throw FabricError("duplicate group member");
  }
}

Group Group::world(const Grid& grid) {
  std::vector<int> m(static_cast<std::size_t>(grid.size()));
  for (int r = 0; r < grid.size(); ++r) m[static_cast<std::size_t>(r)] = r;
  return Group(GroupKind::world, 0, std::move(m));
}

Group Group::row(const Grid& grid, int grid_row) {
  std::vector<int> m;
  for (int j = 0; j < grid.side(); ++j) m.push_back(grid.rank_at(grid_row, j));
  return Group(GroupKind::row, grid_row, std::move(m));
}

Group Group::column(const Grid& grid, int grid_col) {
  std::vector<int> m;
  for (int i = 0; i < grid.side(); ++i) m.push_back(grid.rank_at(i, grid_col));
  return Group(GroupKind::column, grid_col, std::move(m));
}

int Group::position(int rank) const noexcept {
  const auto it = std::lower_bound(members_.begin(), members_.end(), rank);
  if (it == members_.end() || *it != rank) return -1;
  return static_cast<int>(it - members_.begin());
}

std::string Group::name() const {
  std::string s(to_string(kind_));
  if (kind_ != GroupKind::world) s += " " + std::to_string(index_);
  return s;
}

std::string_view to_string(Collective op) {
  switch (op) {
    case Collective::barrier: return "barrier";
    case Collective::allgatherv: return "allgatherv";
    case Collective::broadcast: return "broadcast";
    case Collective::gather: return "gather";
    case Collective::allreduce_sum: return "allreduce_sum";
    case Collective::allreduce_minloc: return "allreduce_minloc";
    case Collective::reduce_scatter_block: return "reduce_scatter_block";
    case Collective::alltoallv: return "alltoallv";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Counting rules

std::vector<Tally> count_sends(Collective op, int group_size,
                               std::span<const std::uint64_t> words,
                               int root_position,
                               std::span<const std::uint64_t> dest_words) {
  const auto g = static_cast<std::size_t>(group_size);
  std::vector<Tally> sent(g);
  if (g <= 1) return sent;

  switch (op) {
    case Collective::barrier:
      break;
    case Collective::allgatherv:
      for (std::size_t l = 0; l < g; ++l) {
        sent[l].messages = g - 1;
        for (std::size_t s = 0; s + 1 < g; ++s) {
          sent[l].words += words[(l + g - s) % g];
        }
      }
      break;
    case Collective::broadcast: {
      const auto root = static_cast<std::size_t>(root_position);
      const std::uint64_t payload = words[root];
      for (std::size_t mask = 1; mask < g; mask <<= 1) {
        for (std::size_t rel = 0; rel < mask && rel + mask < g; ++rel) {
          auto& t = sent[(rel + root) % g];
          t.messages += 1;
          t.words += payload;
        }
      }
      break;
    }
    case Collective::gather:
      for (std::size_t l = 0; l < g; ++l) {
        if (static_cast<int>(l) == root_position) continue;
        sent[l].messages = 1;
        sent[l].words = words[l];
      }
      break;
    case Collective::allreduce_sum:
    case Collective::allreduce_minloc: {
      const std::uint64_t block = (words[0] + g - 1) / g;
      for (auto& t : sent) {
        t.messages = 2 * (g - 1);
        t.words = 2 * (g - 1) * block;
      }
      break;
    }
    case Collective::reduce_scatter_block: {
      const std::uint64_t block = words[0] / g;
      for (auto& t : sent) {
        t.messages = g - 1;
        t.words = (g - 1) * block;
      }
      break;
    }
    case Collective::alltoallv:
      for (std::size_t l = 0; l < g; ++l) {
        for (std::size_t m = 0; m < g; ++m) {
          const std::uint64_t w = dest_words[l * g + m];
          if (m == l || w == 0) continue;
          sent[l].messages += 1;
          sent[l].words += w;
        }
      }
      break;
  }
  return sent;
}

// ---------------------------------------------------------------------------
// Ledger

CommLedger::CommLedger(int ranks)
    : per_rank_(static_cast<std::size_t>(ranks)) {}

void CommLedger::record(CallRecord call) {
  auto it = per_phase_rank_.find(call.phase);
  if (it == per_phase_rank_.end()) {
    it = per_phase_rank_
             .emplace(call.phase, std::vector<Tally>(per_rank_.size()))
             .first;
  }
  for (std::size_t l = 0; l < call.members.size(); ++l) {
    const auto r = static_cast<std::size_t>(call.members[l]);
    per_rank_[r] += call.sent[l];
    it->second[r] += call.sent[l];
  }
  calls_.push_back(std::move(call));
}

Tally CommLedger::phase_total(std::string_view phase) const {
  Tally t;
  const auto it = per_phase_rank_.find(phase);
  if (it == per_phase_rank_.end()) return t;
  for (const auto& r : it->second) t += r;
  return t;
}

Tally CommLedger::phase_rank(std::string_view phase, int rank) const {
  const auto it = per_phase_rank_.find(phase);
  if (it == per_phase_rank_.end()) return {};
  return it->second.at(static_cast<std::size_t>(rank));
}

std::uint64_t CommLedger::max_rank_words(std::string_view phase) const {
  std::uint64_t best = 0;
  const auto it = per_phase_rank_.find(phase);
  if (it == per_phase_rank_.end()) return 0;
  for (const auto& r : it->second) best = std::max(best, r.words);
  return best;
}

Tally CommLedger::total() const {
  Tally t;
  for (const auto& r : per_rank_) t += r;
  return t;
}

std::vector<std::string> CommLedger::phases() const {
  std::vector<std::string> out;
  for (const auto& [phase, _] : per_phase_rank_) out.push_back(phase);
  return out;
}

std::vector<CallRecord> CommLedger::calls() const {
  auto out = calls_;
  std::sort(out.begin(), out.end(), [](const CallRecord& a, const CallRecord& b) {
    return std::tie(a.group_kind, a.group_index, a.sequence) <
           std::tie(b.group_kind, b.group_index, b.sequence);
  });
  return out;
}

void CommLedger::write_csv(std::ostream& os) const {
  os << "phase,rank,messages,words\n";
  for (const auto& [phase, ranks] : per_phase_rank_) {
    for (std::size_t r = 0; r < ranks.size(); ++r) {
      os << phase << ',' << r << ',' << ranks[r].messages << ','
         << ranks[r].words << '\n';
    }
  }
}

bool CommLedger::operator==(const CommLedger& o) const {
  if (per_rank_ != o.per_rank_) return false;
  if (per_phase_rank_ != o.per_phase_rank_) return false;
  const auto a = calls();
  const auto b = o.calls();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].phase != b[i].phase || a[i].op != b[i].op ||
        a[i].members != b[i].members || a[i].sent != b[i].sent ||
        a[i].payload_words != b[i].payload_words) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Shared fabric state

namespace detail {

class FabricState {
 public:
  FabricState(const Grid& grid, RunOptions options)
      : grid_(grid),
        options_(options),
        ledger_(grid.size()),
        ranks_(static_cast<std::size_t>(grid.size())) {}

  const Grid& grid() const noexcept { return grid_; }

  std::shared_ptr<const Instance> exchange(int rank, const Group& group,
                                           Collective op, int root_position,
                                           const std::string& phase,
                                           Contribution mine);

  void begin_rank() {
    if (options_.scheduler == Scheduler::serialized) baton_.lock();
  }
  void end_rank(int rank, std::exception_ptr error);

  CommLedger take_ledger() { return std::move(ledger_); }
  std::optional<std::string> fabric_error() const { return error_; }

 private:
  using GroupKey = std::pair<GroupKind, int>;

  struct RankState {
    bool finished = false;
    bool failed = false;
    Instance* waiting_on = nullptr;
    std::map<GroupKey, std::uint64_t> next_sequence;
  };

  struct PendingKey {
    GroupKey group;
    std::uint64_t sequence;
    auto operator<=>(const PendingKey&) const = default;
  };

  struct Pending {
    std::shared_ptr<Instance> instance;
    std::vector<int> members;
    std::string group_name;
  };

  void complete(const PendingKey& key, Pending& pending);
  void check_deadlock();
  [[noreturn]] void raise_error();

  const Grid grid_;
  const RunOptions options_;

  std::mutex mutex_;
  std::condition_variable cv_;
  std::mutex baton_;

  CommLedger ledger_;
  std::vector<RankState> ranks_;
  std::map<PendingKey, Pending> pending_;
  std::optional<std::string> error_;
  bool aborted_ = false;
};

void FabricState::complete(const PendingKey& key, Pending& pending) {
  Instance& inst = *pending.instance;
  const auto g = inst.contributions.size();

  std::vector<std::uint64_t> words(g);
  for (std::size_t l = 0; l < g; ++l) words[l] = inst.contributions[l].words;

  const bool equal_lengths_required =
      inst.op == Collective::allreduce_sum ||
      inst.op == Collective::allreduce_minloc ||
      inst.op == Collective::reduce_scatter_block;
  if (equal_lengths_required &&
      std::adjacent_find(words.begin(), words.end(),
                         std::not_equal_to<>()) != words.end()) {
    error_ = std::string(to_string(inst.op)) + " in phase '" + inst.phase +
             "' on " + pending.group_name + ": mismatched payload lengths";
    return;
  }

  std::vector<std::uint64_t> dest;
  if (inst.op == Collective::alltoallv) {
    for (const auto& c : inst.contributions) {
      if (c.dest_words.size() != g) {
        error_ = "alltoallv in phase '" + inst.phase +
                 "': payload matrix is not g x g";
        return;
      }
      dest.insert(dest.end(), c.dest_words.begin(), c.dest_words.end());
    }
  }

  CallRecord rec;
  rec.phase = inst.phase;
  rec.op = inst.op;
  rec.group_kind = key.group.first;
  rec.group_index = key.group.second;
  rec.sequence = key.sequence;
  rec.members = pending.members;
  rec.root_position = inst.root_position;
  rec.sent = count_sends(inst.op, static_cast<int>(g), words,
                         inst.root_position, dest);
  rec.payload_words = std::move(words);
  rec.dest_words = std::move(dest);
  ledger_.record(std::move(rec));
}

void FabricState::check_deadlock() {
  if (error_ || aborted_) return;
  bool any_waiting = false;
  for (const auto& r : ranks_) {
    if (r.finished) continue;
    if (r.waiting_on == nullptr) return;  // someone can still make progress
    if (r.waiting_on->arrived == static_cast<int>(r.waiting_on->present.size())) {
      return;
    }
    any_waiting = true;
  }
  if (!any_waiting) return;

  std::ostringstream os;
  os << "deadlock:";
  for (const auto& [key, pending] : pending_) {
    const Instance& inst = *pending.instance;
    if (inst.arrived == static_cast<int>(inst.present.size())) continue;
    os << " collective " << to_string(inst.op) << " in phase '" << inst.phase
       << "' on " << pending.group_name << " is missing rank(s)";
    for (std::size_t l = 0; l < inst.present.size(); ++l) {
      if (!inst.present[l]) os << ' ' << pending.members[l];
    }
    os << ';';
  }
  error_ = os.str();
  cv_.notify_all();
}

void FabricState::raise_error() {
  if (error_) throw FabricError(*error_);
  throw FabricError("aborted: another rank failed");
}

std::shared_ptr<const Instance> FabricState::exchange(
    int rank, const Group& group, Collective op, int root_position,
    const std::string& phase, Contribution mine) {
  if (options_.scheduler == Scheduler::serialized) baton_.unlock();
  struct Relock {
    FabricState& s;
    ~Relock() {
      if (s.options_.scheduler == Scheduler::serialized) s.baton_.lock();
    }
  } relock{*this};

  std::unique_lock lock(mutex_);
  if (error_ || aborted_) raise_error();

  RankState& me = ranks_[static_cast<std::size_t>(rank)];
  const GroupKey gkey{group.kind(), group.index()};
  const PendingKey key{gkey, me.next_sequence[gkey]++};
  const auto g = static_cast<std::size_t>(group.size());
  const auto pos = static_cast<std::size_t>(group.position(rank));

  auto it = pending_.find(key);
  if (it == pending_.end()) {
    Pending p;
    p.instance = std::make_shared<Instance>();
    p.instance->phase = phase;
    p.instance->op = op;
    p.instance->root_position = root_position;
    p.instance->contributions.resize(g);
    p.instance->present.assign(g, false);
    p.members.assign(group.members().begin(), group.members().end());
    p.group_name = group.name();
    it = pending_.emplace(key, std::move(p)).first;
  }
  Pending& pending = it->second;
  Instance& inst = *pending.instance;

  if (inst.op != op || inst.phase != phase ||
      inst.root_position != root_position) {
    std::ostringstream os;
    os << "collective mismatch on " << pending.group_name << " call #"
       << key.sequence << ": rank " << rank << " entered " << to_string(op)
       << " in phase '" << phase << "' but the group is in "
       << to_string(inst.op) << " in phase '" << inst.phase << "'";
    error_ = os.str();
    cv_.notify_all();
    raise_error();
  }

  inst.contributions[pos] = std::move(mine);
  inst.present[pos] = true;
  ++inst.arrived;
  std::shared_ptr<Instance> keep = pending.instance;

  if (inst.arrived == static_cast<int>(g)) {
    complete(key, pending);
    cv_.notify_all();
  } else {
    me.waiting_on = &inst;
    check_deadlock();
    cv_.wait(lock, [&] {
      return error_.has_value() || aborted_ ||
             inst.arrived == static_cast<int>(g);
    });
    me.waiting_on = nullptr;
  }
  if (error_ || aborted_) raise_error();

  if (++inst.departed == static_cast<int>(g)) pending_.erase(key);
  return keep;
}

void FabricState::end_rank(int rank, std::exception_ptr error) {
  {
    std::lock_guard lock(mutex_);
    RankState& me = ranks_[static_cast<std::size_t>(rank)];
    me.finished = true;
    me.failed = error != nullptr;
    if (error && !error_) aborted_ = true;
    check_deadlock();
    cv_.notify_all();
  }
  if (options_.scheduler == Scheduler::serialized) baton_.unlock();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Communicator

Communicator::Communicator(detail::FabricState& state, int rank)
    : state_(&state), rank_(rank), world_(Group::world(state.grid())) {
  const Grid& g = state.grid();
  if (g.layout() == Layout::two_d_column_major) {
    row_ = std::make_unique<Group>(Group::row(g, g.grid_row(rank)));
    column_ = std::make_unique<Group>(Group::column(g, g.grid_col(rank)));
  }
}

const Grid& Communicator::grid() const noexcept { return state_->grid(); }

const Group& Communicator::row() const {
  if (!row_) throw FabricError("row groups require a 2D grid");
  return *row_;
}

const Group& Communicator::column() const {
  if (!column_) throw FabricError("column groups require a 2D grid");
  return *column_;
}

void Communicator::require_member(const Group& group) const {
  if (group.position(rank_) < 0) {
    throw FabricError("rank " + std::to_string(rank_) + " is not a member of " +
                      group.name());
  }
}

std::shared_ptr<const detail::Instance> Communicator::exchange(
    const Group& group, Collective op, int root_rank,
    detail::Contribution mine) {
  require_member(group);
  int root_position = -1;
  if (op == Collective::broadcast || op == Collective::gather) {
    root_position = group.position(root_rank);
    if (root_position < 0) {
      throw FabricError("root rank " + std::to_string(root_rank) +
                        " is not a member of " + group.name());
    }
  }
  return state_->exchange(rank_, group, op, root_position, phase_,
                          std::move(mine));
}

void Communicator::barrier(const Group& group) {
  exchange(group, Collective::barrier, -1, {});
}

// ---------------------------------------------------------------------------
// Runner

CommLedger execute(const Grid& grid,
                   const std::function<void(Communicator&)>& program,
                   RunOptions options) {
  detail::FabricState state(grid, options);
  const auto p = static_cast<std::size_t>(grid.size());
  std::vector<std::exception_ptr> errors(p);
  {
    std::vector<std::jthread> workers;
    workers.reserve(p);
    for (std::size_t r = 0; r < p; ++r) {
      workers.emplace_back([&, r] {
        const int rank = static_cast<int>(r);
        state.begin_rank();
        std::exception_ptr err;
        try {
          Communicator comm(state, rank);
          program(comm);
        } catch (...) {
          err = std::current_exception();
        }
        errors[r] = err;
        state.end_rank(rank, err);
      });
    }
  }

  // A program's own exception takes precedence over the fabric errors it
  // caused on other ranks.
  for (const auto& e : errors) {
    if (!e) continue;
    try {
      std::rethrow_exception(e);
    } catch (const FabricError&) {
    }
  }
  if (const auto msg = state.fabric_error()) throw FabricError(*msg);
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return state.take_ledger();
}

}  // namespace kkm::fabric
