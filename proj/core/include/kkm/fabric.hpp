#pragma once

// Virtual multi-rank message-passing fabric.
//
// Rank programs run as threads and synchronize only through the collectives
// below. Every collective is charged to the CommLedger with a fixed,
// closed-form counting rule:
//
//   allgatherv            ring: each rank sends g-1 messages; rank at group
//                         position l sends every block except block (l+1)%g
//   broadcast             binomial tree rooted at the root's position
//   gather                flat: every non-root sends one message to the root
//   allreduce (sum|minloc) ring reduce-scatter + ring allgather on blocks of
//                         ceil(W/g) words: 2(g-1) messages per rank
//   reduce_scatter_block  ring: g-1 messages of W/g words per rank
//   alltoallv             one message per nonzero off-rank payload
//
// A word is one scalar or one index; minloc elements count as two words.
// Reductions combine contributions in ascending group position, which is
// ascending global rank, so results do not depend on thread scheduling.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace kkm::fabric {

class FabricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Layout { one_d, two_d_column_major };

class Grid {
 public:
  static Grid one_d(int ranks);
  /// Square q x q grid with column-major rank order: rank(i, j) = i + j*q.
  static Grid two_d(int ranks);

  int size() const noexcept { return size_; }
  int side() const noexcept { return side_; }
  Layout layout() const noexcept { return layout_; }

  int rank_at(int row, int col) const;
  int grid_row(int rank) const;
  int grid_col(int rank) const;

 private:
  Grid(int size, int side, Layout layout)
      : size_(size), side_(side), layout_(layout) {}

  int size_;
  int side_;
  Layout layout_;
};

enum class GroupKind { world, row, column };

std::string_view to_string(GroupKind kind);

/// An ordered set of ranks taking part in a collective. Members are sorted
/// by ascending global rank.
class Group {
 public:
  Group(GroupKind kind, int index, std::vector<int> members);

  static Group world(const Grid& grid);
  static Group row(const Grid& grid, int grid_row);
  static Group column(const Grid& grid, int grid_col);

  GroupKind kind() const noexcept { return kind_; }
  int index() const noexcept { return index_; }
  int size() const noexcept { return static_cast<int>(members_.size()); }
  std::span<const int> members() const noexcept { return members_; }
  int member(int position) const { return members_.at(position); }
  /// Position of `rank` in the group, or -1.
  int position(int rank) const noexcept;
  std::string name() const;

 private:
  GroupKind kind_;
  int index_;
  std::vector<int> members_;
};

enum class Collective {
  barrier,
  allgatherv,
  broadcast,
  gather,
  allreduce_sum,
  allreduce_minloc,
  reduce_scatter_block,
  alltoallv,
};

std::string_view to_string(Collective op);

struct Tally {
  std::uint64_t messages = 0;
  std::uint64_t words = 0;

  Tally& operator+=(const Tally& o) {
    messages += o.messages;
    words += o.words;
    return *this;
  }
  bool operator==(const Tally&) const = default;
};

/// Closed-form send counts per group position for one collective call.
/// `words[l]` is the payload word count contributed by position l. For
/// alltoallv, `dest_words[l * g + m]` is the words position l sends to m.
std::vector<Tally> count_sends(Collective op, int group_size,
                               std::span<const std::uint64_t> words,
                               int root_position,
                               std::span<const std::uint64_t> dest_words = {});

struct CallRecord {
  std::string phase;
  Collective op = Collective::barrier;
  GroupKind group_kind = GroupKind::world;
  int group_index = 0;
  std::uint64_t sequence = 0;  // per-group call number
  std::vector<int> members;
  int root_position = -1;
  std::vector<std::uint64_t> payload_words;  // per position
  std::vector<std::uint64_t> dest_words;     // alltoallv only, g*g
  std::vector<Tally> sent;                   // per position
};

class CommLedger {
 public:
  CommLedger() = default;
  explicit CommLedger(int ranks);

  void record(CallRecord call);

  int ranks() const noexcept { return static_cast<int>(per_rank_.size()); }
  Tally rank_total(int rank) const { return per_rank_.at(rank); }
  Tally phase_total(std::string_view phase) const;
  Tally phase_rank(std::string_view phase, int rank) const;
  std::uint64_t max_rank_words(std::string_view phase) const;
  Tally total() const;
  std::vector<std::string> phases() const;

  /// Calls in canonical order: by group, then per-group sequence number.
  std::vector<CallRecord> calls() const;

  /// CSV with columns phase,rank,messages,words.
  void write_csv(std::ostream& os) const;

  bool operator==(const CommLedger& o) const;

 private:
  std::vector<Tally> per_rank_;
  std::map<std::string, std::vector<Tally>, std::less<>> per_phase_rank_;
  std::vector<CallRecord> calls_;
};

template <typename T>
struct MinLoc {
  T value;
  std::int64_t index;
};

namespace detail {

template <typename E>
struct words_per_element : std::integral_constant<std::size_t, 1> {};
template <typename T>
struct words_per_element<MinLoc<T>> : std::integral_constant<std::size_t, 2> {};

struct Contribution {
  std::vector<std::byte> bytes;
  std::uint64_t words = 0;
  std::vector<std::size_t> dest_elements;  // alltoallv only
  std::vector<std::uint64_t> dest_words;   // alltoallv only
};

struct Instance;
class FabricState;

template <typename E>
std::vector<std::byte> to_bytes(std::span<const E> values) {
  static_assert(std::is_trivially_copyable_v<E>);
  std::vector<std::byte> out(values.size_bytes());
  if (!out.empty()) std::memcpy(out.data(), values.data(), out.size());
  return out;
}

template <typename E>
std::vector<E> from_bytes(std::span<const std::byte> bytes) {
  static_assert(std::is_trivially_copyable_v<E>);
  std::vector<E> out(bytes.size() / sizeof(E));
  if (!out.empty()) std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

}  // namespace detail

/// Per-rank handle passed to rank programs.
class Communicator {
 public:
  Communicator(detail::FabricState& state, int rank);

  int rank() const noexcept { return rank_; }
  const Grid& grid() const noexcept;
  const Group& world() const noexcept { return world_; }
  /// Row / column groups of this rank; only valid on two-dimensional grids.
  const Group& row() const;
  const Group& column() const;

  void set_phase(std::string phase) { phase_ = std::move(phase); }
  const std::string& phase() const noexcept { return phase_; }

  /// Sets the phase label for its lifetime and restores the previous one.
  class PhaseScope {
   public:
    PhaseScope(Communicator& comm, std::string phase)
        : comm_(comm), saved_(comm.phase()) {
      comm_.set_phase(std::move(phase));
    }
    ~PhaseScope() { comm_.set_phase(std::move(saved_)); }
    PhaseScope(const PhaseScope&) = delete;
    PhaseScope& operator=(const PhaseScope&) = delete;

   private:
    Communicator& comm_;
    std::string saved_;
  };

  void barrier(const Group& group);

  /// Concatenation of every member's payload in ascending rank order.
  /// `counts`, if given, receives the element count contributed per member.
  template <typename E>
  std::vector<E> allgatherv(const Group& group, std::span<const E> local,
                            std::vector<std::size_t>* counts = nullptr);

  /// On return every member holds the root's `data`.
  template <typename E>
  void broadcast(const Group& group, int root_rank, std::vector<E>& data);

  /// Root receives the rank-ordered concatenation; others get an empty vector.
  template <typename E>
  std::vector<E> gather(const Group& group, int root_rank,
                        std::span<const E> local);

  template <typename T>
  std::vector<T> allreduce_sum(const Group& group, std::span<const T> local);

  /// Elementwise minimum; on equal values the lower-ranked contribution wins.
  template <typename T>
  std::vector<MinLoc<T>> allreduce_minloc(const Group& group,
                                          std::span<const MinLoc<T>> local);

  /// Member at group position l receives the sum of everyone's l-th block.
  template <typename T>
  std::vector<T> reduce_scatter_block(const Group& group,
                                      std::span<const T> local);

  /// `per_dest[m]` goes to group position m; returns payloads per source
  /// position.
  template <typename E>
  std::vector<std::vector<E>> alltoallv(
      const Group& group, const std::vector<std::vector<E>>& per_dest);

 private:
  // Blocks until every member has contributed. Returns all contributions in
  // group-position order.
  std::shared_ptr<const detail::Instance> exchange(const Group& group,
                                                   Collective op,
                                                   int root_rank,
                                                   detail::Contribution mine);
  const std::vector<detail::Contribution>& contributions(
      const detail::Instance& inst) const;
  void require_member(const Group& group) const;

  detail::FabricState* state_;
  int rank_;
  Group world_;
  std::unique_ptr<Group> row_;
  std::unique_ptr<Group> column_;
  std::string phase_ = "unlabeled";
};

enum class Scheduler {
  threads,     // all ranks run concurrently
  serialized,  // one rank runs at a time; control passes at collectives
};

struct RunOptions {
  Scheduler scheduler = Scheduler::threads;
};

/// Runs `program` on every rank of `grid` and returns the ledger. Rethrows
/// the first (lowest-rank) exception raised by a rank program; a collective
/// that cannot complete raises FabricError naming its phase.
CommLedger execute(const Grid& grid,
                   const std::function<void(Communicator&)>& program,
                   RunOptions options = {});

template <typename R>
struct RunOutcome {
  std::vector<R> results;  // indexed by rank
  CommLedger ledger;
};

template <typename R, typename Program>
RunOutcome<R> run_ranks(const Grid& grid, Program&& program,
                        RunOptions options = {}) {
  RunOutcome<R> out;
  out.results.resize(static_cast<std::size_t>(grid.size()));
  out.ledger = execute(
      grid,
      [&](Communicator& comm) {
        out.results[static_cast<std::size_t>(comm.rank())] = program(comm);
      },
      options);
  return out;
}

// ---------------------------------------------------------------------------
// Template implementations

namespace detail {

struct Instance {
  std::string phase;
  Collective op = Collective::barrier;
  int root_position = -1;
  int arrived = 0;
  int departed = 0;
  std::vector<Contribution> contributions;  // by group position
  std::vector<bool> present;
};

}  // namespace detail

inline const std::vector<detail::Contribution>& Communicator::contributions(
    const detail::Instance& inst) const {
  return inst.contributions;
}

template <typename E>
std::vector<E> Communicator::allgatherv(const Group& group,
                                        std::span<const E> local,
                                        std::vector<std::size_t>* counts) {
  detail::Contribution mine;
  mine.bytes = detail::to_bytes(local);
  mine.words = local.size() * detail::words_per_element<E>::value;
  const auto inst = exchange(group, Collective::allgatherv, -1, std::move(mine));
  std::vector<E> out;
  if (counts) counts->clear();
  for (const auto& c : contributions(*inst)) {
    auto part = detail::from_bytes<E>(c.bytes);
    if (counts) counts->push_back(part.size());
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

template <typename E>
void Communicator::broadcast(const Group& group, int root_rank,
                             std::vector<E>& data) {
  detail::Contribution mine;
  if (rank_ == root_rank) {
    mine.bytes = detail::to_bytes(std::span<const E>(data));
    mine.words = data.size() * detail::words_per_element<E>::value;
  }
  const auto inst =
      exchange(group, Collective::broadcast, root_rank, std::move(mine));
  if (rank_ != root_rank) {
    data = detail::from_bytes<E>(
        contributions(*inst)[static_cast<std::size_t>(inst->root_position)]
            .bytes);
  }
}

template <typename E>
std::vector<E> Communicator::gather(const Group& group, int root_rank,
                                    std::span<const E> local) {
  detail::Contribution mine;
  mine.bytes = detail::to_bytes(local);
  mine.words = local.size() * detail::words_per_element<E>::value;
  const auto inst =
      exchange(group, Collective::gather, root_rank, std::move(mine));
  std::vector<E> out;
  if (rank_ == root_rank) {
    for (const auto& c : contributions(*inst)) {
      auto part = detail::from_bytes<E>(c.bytes);
      out.insert(out.end(), part.begin(), part.end());
    }
  }
  return out;
}

template <typename T>
std::vector<T> Communicator::allreduce_sum(const Group& group,
                                           std::span<const T> local) {
  detail::Contribution mine;
  mine.bytes = detail::to_bytes(local);
  mine.words = local.size();
  const auto inst =
      exchange(group, Collective::allreduce_sum, -1, std::move(mine));
  const auto& parts = contributions(*inst);
  std::vector<T> acc = detail::from_bytes<T>(parts.front().bytes);
  for (std::size_t p = 1; p < parts.size(); ++p) {
    const auto next = detail::from_bytes<T>(parts[p].bytes);
    for (std::size_t e = 0; e < acc.size(); ++e) acc[e] += next[e];
  }
  return acc;
}

template <typename T>
std::vector<MinLoc<T>> Communicator::allreduce_minloc(
    const Group& group, std::span<const MinLoc<T>> local) {
  detail::Contribution mine;
  mine.bytes = detail::to_bytes(local);
  mine.words = local.size() * 2;
  const auto inst =
      exchange(group, Collective::allreduce_minloc, -1, std::move(mine));
  const auto& parts = contributions(*inst);
  auto acc = detail::from_bytes<MinLoc<T>>(parts.front().bytes);
  for (std::size_t p = 1; p < parts.size(); ++p) {
    const auto next = detail::from_bytes<MinLoc<T>>(parts[p].bytes);
    for (std::size_t e = 0; e < acc.size(); ++e) {
      if (next[e].value < acc[e].value) acc[e] = next[e];
    }
  }
  return acc;
}

template <typename T>
std::vector<T> Communicator::reduce_scatter_block(const Group& group,
                                                  std::span<const T> local) {
  const auto g = static_cast<std::size_t>(group.size());
  if (local.size() % g != 0) {
    throw FabricError("reduce_scatter_block: payload of " +
                      std::to_string(local.size()) +
                      " words not divisible by group size " +
                      std::to_string(g));
  }
  detail::Contribution mine;
  mine.bytes = detail::to_bytes(local);
  mine.words = local.size();
  const auto inst =
      exchange(group, Collective::reduce_scatter_block, -1, std::move(mine));
  const auto& parts = contributions(*inst);
  const std::size_t block = local.size() / g;
  const std::size_t pos = static_cast<std::size_t>(group.position(rank_));
  std::vector<T> acc(block);
  const auto first = detail::from_bytes<T>(parts.front().bytes);
  std::copy_n(first.begin() + static_cast<std::ptrdiff_t>(pos * block), block,
              acc.begin());
  for (std::size_t p = 1; p < parts.size(); ++p) {
    const auto next = detail::from_bytes<T>(parts[p].bytes);
    for (std::size_t e = 0; e < block; ++e) acc[e] += next[pos * block + e];
  }
  return acc;
}

template <typename E>
std::vector<std::vector<E>> Communicator::alltoallv(
    const Group& group, const std::vector<std::vector<E>>& per_dest) {
  const auto g = static_cast<std::size_t>(group.size());
  if (per_dest.size() != g) {
    throw FabricError("alltoallv: expected one payload per group member");
  }
  detail::Contribution mine;
  for (const auto& payload : per_dest) {
    const auto bytes = detail::to_bytes(std::span<const E>(payload));
    mine.bytes.insert(mine.bytes.end(), bytes.begin(), bytes.end());
    mine.dest_elements.push_back(payload.size());
    mine.dest_words.push_back(payload.size() *
                              detail::words_per_element<E>::value);
    mine.words += mine.dest_words.back();
  }
  const auto inst =
      exchange(group, Collective::alltoallv, -1, std::move(mine));
  const std::size_t pos = static_cast<std::size_t>(group.position(rank_));
  std::vector<std::vector<E>> out(g);
  for (std::size_t src = 0; src < g; ++src) {
    const auto& c = contributions(*inst)[src];
    std::size_t offset = 0;
    for (std::size_t m = 0; m < pos; ++m) offset += c.dest_elements[m];
    const std::span<const std::byte> bytes(
        c.bytes.data() + offset * sizeof(E), c.dest_elements[pos] * sizeof(E));
    out[src] = detail::from_bytes<E>(bytes);
  }
  return out;
}

}  // namespace kkm::fabric
