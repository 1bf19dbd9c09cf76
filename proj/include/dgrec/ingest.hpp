#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dgrec/checkpoint.hpp"
#include "dgrec/rng.hpp"

namespace dgrec {

using UserIndex = std::uint32_t;
using ItemIndex = std::uint32_t;

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Event parsing
// ---------------------------------------------------------------------------

struct Event {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;
};

struct RowError {
  std::size_t line;  // 1-based, header is line 1
  std::string message;
};

struct ParsedEvents {
  std::vector<Event> events;
  std::vector<RowError> row_errors;
  std::size_t total_rows = 0;
};

namespace detail {

inline std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::optional<std::int64_t> parse_int(const std::string& s) {
  std::int64_t v = 0;
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e || s.empty()) return std::nullopt;
  return v;
}

}  // namespace detail

// Reads `user_id,item_id,timestamp` rows. Malformed rows are collected and
// reported rather than fatal; the whole parse fails only when the header is
// missing or, for non-tiny inputs (>= 20 rows), more than 10% of rows are bad.
inline ParsedEvents parse_events(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError("events: empty stream, expected header "
                      "user_id,item_id,timestamp");
  }
  if (detail::strip_cr(line) != "user_id,item_id,timestamp") {
    throw FormatError("events: missing or malformed header, expected "
                      "user_id,item_id,timestamp");
  }
  ParsedEvents out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    ++out.total_rows;
    auto fields = detail::split_csv(line);
    if (fields.size() != 3) {
      out.row_errors.push_back({line_no, "expected 3 fields, got " +
                                             std::to_string(fields.size())});
      continue;
    }
    if (fields[0].empty() || fields[1].empty()) {
      out.row_errors.push_back({line_no, "empty user or item id"});
      continue;
    }
    auto ts = detail::parse_int(fields[2]);
    if (!ts) {
      out.row_errors.push_back(
          {line_no, "non-integer timestamp '" + fields[2] + "'"});
      continue;
    }
    if (*ts < 0) {
      out.row_errors.push_back({line_no, "negative timestamp"});
      continue;
    }
    out.events.push_back({std::move(fields[0]), std::move(fields[1]), *ts});
  }
  if (out.total_rows >= 20 &&
      out.row_errors.size() * 10 > out.total_rows) {
    throw FormatError("events: " + std::to_string(out.row_errors.size()) +
                      " of " + std::to_string(out.total_rows) +
                      " rows malformed (>10%)");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Session segmentation
// ---------------------------------------------------------------------------

enum class Interval { kDay, kWeek, kMonth, kTagBundle };

inline const char* to_string(Interval iv) {
  switch (iv) {
    case Interval::kDay: return "day";
    case Interval::kWeek: return "week";
    case Interval::kMonth: return "month";
    case Interval::kTagBundle: return "tag-bundle";
  }
  return "?";
}

inline Interval interval_from_string(const std::string& s) {
  if (s == "day") return Interval::kDay;
  if (s == "week") return Interval::kWeek;
  if (s == "month") return Interval::kMonth;
  if (s == "tag-bundle") return Interval::kTagBundle;
  throw FormatError("unknown interval '" + s +
                    "' (expected day|week|month|tag-bundle)");
}

namespace detail {

// Days since 1970-01-01 to civil date; Howard Hinnant's algorithm.
inline void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  unsigned doe = static_cast<unsigned>(z - era * 146097);
  unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y = static_cast<int>(yy + (m <= 2));
}

inline std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  unsigned yoe = static_cast<unsigned>(y - era * 400);
  unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

constexpr std::int64_t kDaySeconds = 86400;
constexpr std::int64_t kWeekSeconds = 7 * kDaySeconds;
// 1970-01-01 was a Thursday; shift so weeks start Monday 00:00 UTC.
constexpr std::int64_t kMondayShift = 3 * kDaySeconds;

// Calendar-aligned bucket index for a timestamp.
inline std::int64_t bucket_index(std::int64_t ts, Interval iv) {
  switch (iv) {
    case Interval::kDay:
      return ts / kDaySeconds;
    case Interval::kWeek:
      return (ts + kMondayShift) / kWeekSeconds;
    case Interval::kMonth: {
      int y;
      unsigned m, d;
      civil_from_days(ts / kDaySeconds, y, m, d);
      return static_cast<std::int64_t>(y - 1970) * 12 + (m - 1);
    }
    case Interval::kTagBundle:
      return ts;  // bundles are (user, exact timestamp) groups
  }
  return 0;
}

inline std::int64_t bucket_start(std::int64_t idx, Interval iv) {
  switch (iv) {
    case Interval::kDay:
      return idx * kDaySeconds;
    case Interval::kWeek:
      return idx * kWeekSeconds - kMondayShift;
    case Interval::kMonth: {
      int y = 1970 + static_cast<int>(idx / 12);
      unsigned m = static_cast<unsigned>(idx % 12) + 1;
      return days_from_civil(y, m, 1) * kDaySeconds;
    }
    case Interval::kTagBundle:
      return idx;
  }
  return 0;
}

}  // namespace detail

// Sessions over raw string ids, before any vocabulary is fixed.
struct RawSession {
  std::string user_id;
  std::uint32_t time_index = 0;  // shared clock across users, 1-based
  std::int64_t start_ts = 0;     // interval start (bundle timestamp for
                                 // tag-bundle segmentation)
  std::vector<std::string> items;
};

struct RawStore {
  std::vector<std::string> user_order;  // first appearance in the event stream
  std::unordered_map<std::string, std::vector<RawSession>> by_user;
  std::size_t session_count = 0;
  std::size_t event_count = 0;
  std::int64_t max_timestamp = 0;

  void add(RawSession s) {
    auto it = by_user.find(s.user_id);
    if (it == by_user.end()) {
      user_order.push_back(s.user_id);
      it = by_user.emplace(s.user_id, std::vector<RawSession>{}).first;
    }
    event_count += s.items.size();
    ++session_count;
    it->second.push_back(std::move(s));
  }
};

// Buckets each user's events into calendar-aligned UTC intervals (or
// same-timestamp bundles for tag-bundle mode). Every non-empty bucket becomes
// one session; sessions longer than max_session_len keep only their most
// recent max_session_len items. time_index is a shared 1-based clock: the
// bucket's offset from the earliest bucket observed anywhere in the data, so
// "time_index < t" means "strictly before session t in real time" for any
// pair of users.
inline RawStore segment_sessions(const std::vector<Event>& events, Interval iv,
                                 std::size_t max_session_len = 20) {
  RawStore store;
  if (events.empty()) return store;

  struct Bucket {
    std::int64_t index;
    std::vector<const Event*> events;
  };
  std::vector<std::string> user_order;
  std::unordered_map<std::string, std::vector<const Event*>> per_user;
  std::int64_t max_ts = 0;
  for (const Event& e : events) {
    auto it = per_user.find(e.user_id);
    if (it == per_user.end()) {
      user_order.push_back(e.user_id);
      it = per_user.emplace(e.user_id, std::vector<const Event*>{}).first;
    }
    it->second.push_back(&e);
    max_ts = std::max(max_ts, e.timestamp);
  }

  // First pass: bucket per user, track the global earliest bucket.
  std::unordered_map<std::string, std::vector<Bucket>> buckets;
  std::int64_t min_bucket = 0;
  bool have_min = false;
  std::set<std::int64_t> bundle_keys;  // tag-bundle uses dense ranks
  for (const auto& user : user_order) {
    auto& evs = per_user[user];
    std::stable_sort(evs.begin(), evs.end(),
                     [](const Event* a, const Event* b) {
                       return a->timestamp < b->timestamp;
                     });
    std::vector<Bucket>& ub = buckets[user];
    for (const Event* e : evs) {
      std::int64_t idx = detail::bucket_index(e->timestamp, iv);
      if (ub.empty() || ub.back().index != idx) {
        ub.push_back({idx, {}});
      }
      ub.back().events.push_back(e);
      if (iv == Interval::kTagBundle) bundle_keys.insert(idx);
      if (!have_min || idx < min_bucket) {
        min_bucket = idx;
        have_min = true;
      }
    }
  }

  std::map<std::int64_t, std::uint32_t> bundle_rank;
  if (iv == Interval::kTagBundle) {
    std::uint32_t r = 1;
    for (std::int64_t k : bundle_keys) bundle_rank[k] = r++;
  }

  for (const auto& user : user_order) {
    for (const Bucket& b : buckets[user]) {
      RawSession s;
      s.user_id = user;
      s.time_index = iv == Interval::kTagBundle
                         ? bundle_rank[b.index]
                         : static_cast<std::uint32_t>(b.index - min_bucket + 1);
      s.start_ts = detail::bucket_start(b.index, iv);
      for (const Event* e : b.events) s.items.push_back(e->item_id);
      if (s.items.size() > max_session_len) {
        s.items.erase(s.items.begin(),
                      s.items.end() - static_cast<std::ptrdiff_t>(
                                          max_session_len));
      }
      store.add(std::move(s));
    }
  }
  store.max_timestamp = max_ts;
  return store;
}

// ---------------------------------------------------------------------------
// Holdout split
// ---------------------------------------------------------------------------

struct SplitConfig {
  int holdout_days = 1;
  Interval interval = Interval::kWeek;
  std::uint64_t seed = 0;
};

struct SplitResult {
  RawStore train, valid, test;
  std::size_t holdout_sessions = 0;
  std::size_t filtered_events = 0;        // holdout items unseen in train
  std::size_t dropped_sessions = 0;       // holdout sessions emptied by filter
  std::size_t dropped_unknown_users = 0;  // holdout sessions of users with no
                                          // training history
};

// Sessions whose interval start falls within the last `holdout_days` days of
// the data (measured from the global max timestamp) are held out and split
// 50/50 into validation and test by seeded shuffle. Holdout items that never
// occur in training are removed; sessions emptied by that filter are dropped,
// as are holdout sessions of users absent from training.
inline SplitResult split_holdout(const RawStore& all, const SplitConfig& cfg) {
  if (cfg.holdout_days < 1) {
    throw FormatError("holdout_days must be >= 1");
  }
  SplitResult res;
  std::int64_t cutoff =
      all.max_timestamp -
      static_cast<std::int64_t>(cfg.holdout_days) * detail::kDaySeconds;

  std::vector<const RawSession*> holdout;
  for (const auto& user : all.user_order) {
    for (const RawSession& s : all.by_user.at(user)) {
      if (s.start_ts > cutoff) {
        holdout.push_back(&s);
      } else {
        res.train.add(s);
      }
    }
  }
  res.train.max_timestamp = all.max_timestamp;
  res.holdout_sessions = holdout.size();

  CounterRng rng = CounterRng(cfg.seed).fork("holdout_split");
  shuffle(holdout, rng);

  std::unordered_set<std::string> train_items;
  std::unordered_set<std::string> train_users;
  for (const auto& user : res.train.user_order) {
    train_users.insert(user);
    for (const RawSession& s : res.train.by_user.at(user)) {
      for (const auto& item : s.items) train_items.insert(item);
    }
  }

  std::size_t half = holdout.size() / 2;
  // Filtered holdout copies land in valid (first half) or test, preserving
  // each user's chronological order inside the destination store.
  auto place = [&](const RawSession& s, RawStore& dst) {
    if (!train_users.count(s.user_id)) {
      ++res.dropped_unknown_users;
      return;
    }
    RawSession copy = s;
    std::size_t before = copy.items.size();
    copy.items.erase(std::remove_if(copy.items.begin(), copy.items.end(),
                                    [&](const std::string& it) {
                                      return !train_items.count(it);
                                    }),
                     copy.items.end());
    res.filtered_events += before - copy.items.size();
    if (copy.items.empty()) {
      ++res.dropped_sessions;
      return;
    }
    dst.add(std::move(copy));
  };
  std::vector<std::pair<const RawSession*, bool>> placed;
  for (std::size_t i = 0; i < holdout.size(); ++i) {
    placed.push_back({holdout[i], i < half});
  }
  // Keep destination stores internally chronological per user.
  std::stable_sort(placed.begin(), placed.end(),
                   [](const auto& a, const auto& b) {
                     if (a.first->user_id != b.first->user_id) {
                       return a.first->user_id < b.first->user_id;
                     }
                     return a.first->time_index < b.first->time_index;
                   });
  for (const auto& [s, to_valid] : placed) {
    place(*s, to_valid ? res.valid : res.test);
  }
  res.valid.max_timestamp = all.max_timestamp;
  res.test.max_timestamp = all.max_timestamp;
  return res;
}

// ---------------------------------------------------------------------------
// Vocabularies
// ---------------------------------------------------------------------------

// Bijective map between opaque string ids and dense indexes from 0.
class Vocab {
 public:
  std::uint32_t add(const std::string& id) {
    auto it = index_.find(id);
    if (it != index_.end()) return it->second;
    std::uint32_t idx = static_cast<std::uint32_t>(ids_.size());
    ids_.push_back(id);
    index_.emplace(id, idx);
    return idx;
  }

  std::optional<std::uint32_t> find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& id_of(std::uint32_t idx) const {
    if (idx >= ids_.size()) {
      throw FormatError("vocab index " + std::to_string(idx) +
                        " out of range (size " + std::to_string(ids_.size()) +
                        ")");
    }
    return ids_[idx];
  }

  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

// Item and user vocabularies over exactly the training store, indexed by
// first appearance in store order.
inline std::pair<Vocab, Vocab> build_vocabs(const RawStore& train) {
  if (train.session_count == 0) {
    throw FormatError("cannot build vocabularies from an empty training set");
  }
  Vocab items, users;
  for (const auto& user : train.user_order) {
    users.add(user);
    for (const RawSession& s : train.by_user.at(user)) {
      for (const auto& item : s.items) items.add(item);
    }
  }
  return {std::move(items), std::move(users)};
}

// ---------------------------------------------------------------------------
// Indexed store
// ---------------------------------------------------------------------------

struct Session {
  UserIndex user = 0;
  std::uint32_t time_index = 0;
  std::int64_t start_ts = 0;
  std::vector<ItemIndex> items;
};

struct SessionStore {
  std::vector<std::vector<Session>> by_user;  // chronological per user
  std::size_t session_count = 0;
  std::size_t event_count = 0;
  std::uint32_t horizon = 0;

  void ensure_users(std::size_t n) {
    if (by_user.size() < n) by_user.resize(n);
  }

  void add(Session s) {
    ensure_users(s.user + 1);
    ++session_count;
    event_count += s.items.size();
    horizon = std::max(horizon, s.time_index);
    by_user[s.user].push_back(std::move(s));
  }

  double avg_session_length() const {
    return session_count == 0
               ? 0.0
               : static_cast<double>(event_count) /
                     static_cast<double>(session_count);
  }
};

// Resolves raw ids to vocabulary indexes. All ids must be known (holdout
// stores are pre-filtered by split_holdout).
inline SessionStore index_store(const RawStore& raw, const Vocab& items,
                                const Vocab& users) {
  SessionStore store;
  store.ensure_users(users.size());
  for (const auto& user : raw.user_order) {
    auto uidx = users.find(user);
    if (!uidx) throw FormatError("user '" + user + "' not in vocabulary");
    for (const RawSession& rs : raw.by_user.at(user)) {
      Session s;
      s.user = *uidx;
      s.time_index = rs.time_index;
      s.start_ts = rs.start_ts;
      for (const auto& item : rs.items) {
        auto iidx = items.find(item);
        if (!iidx) throw FormatError("item '" + item + "' not in vocabulary");
        s.items.push_back(*iidx);
      }
      store.add(std::move(s));
    }
  }
  for (auto& sessions : store.by_user) {
    std::stable_sort(sessions.begin(), sessions.end(),
                     [](const Session& a, const Session& b) {
                       return a.time_index < b.time_index;
                     });
  }
  return store;
}

// ---------------------------------------------------------------------------
// DGRS1 store serialization
// ---------------------------------------------------------------------------
// Layout (all integers little-endian):
//   magic "DGRS1", version u8
//   item vocab : u64 count, then per id: u64 length + bytes
//   user vocab : same
//   per user (vocab order): u64 session count, then per session:
//     u32 time_index, i64 start_ts, u64 item count, u32 item indexes
// Counts are 64-bit, indexes 32-bit.

inline void detail_vocab_out(std::ostream& os, const Vocab& v) {
  detail::put_u64(os, v.size());
  for (const auto& id : v.ids()) detail::put_str(os, id);
}

inline void write_store(std::ostream& os, const SessionStore& store,
                        const Vocab& items, const Vocab& users) {
  os.write("DGRS1", 5);
  os.put(1);
  detail_vocab_out(os, items);
  detail_vocab_out(os, users);
  static const std::vector<Session> kNoSessions;
  for (std::size_t u = 0; u < users.size(); ++u) {
    const auto& sessions =
        u < store.by_user.size() ? store.by_user[u] : kNoSessions;
    detail::put_u64(os, sessions.size());
    for (const Session& s : sessions) {
      detail::put_u32(os, s.time_index);
      detail::put_i64(os, s.start_ts);
      detail::put_u64(os, s.items.size());
      for (ItemIndex it : s.items) detail::put_u32(os, it);
    }
  }
}

struct LoadedStore {
  SessionStore store;
  Vocab items;
  Vocab users;
};

inline Vocab detail_vocab_in(std::istream& is) {
  Vocab v;
  std::uint64_t n = detail::get_u64(is);
  for (std::uint64_t i = 0; i < n; ++i) v.add(detail::get_str(is));
  return v;
}

inline LoadedStore read_store(std::istream& is) {
  char magic[5];
  if (!is.read(magic, 5) || std::string(magic, 5) != "DGRS1") {
    throw IoError("bad store magic, expected DGRS1");
  }
  int version = is.get();
  if (version != 1) {
    throw IoError("unsupported store version " + std::to_string(version));
  }
  LoadedStore out;
  out.items = detail_vocab_in(is);
  out.users = detail_vocab_in(is);
  out.store.ensure_users(out.users.size());
  for (std::size_t u = 0; u < out.users.size(); ++u) {
    std::uint64_t count = detail::get_u64(is);
    for (std::uint64_t i = 0; i < count; ++i) {
      Session s;
      s.user = static_cast<UserIndex>(u);
      s.time_index = detail::get_u32(is);
      s.start_ts = detail::get_i64(is);
      std::uint64_t n = detail::get_u64(is);
      for (std::uint64_t j = 0; j < n; ++j) {
        ItemIndex idx = detail::get_u32(is);
        if (idx >= out.items.size()) {
          throw IoError("store item index " + std::to_string(idx) +
                        " exceeds vocabulary size " +
                        std::to_string(out.items.size()));
        }
        s.items.push_back(idx);
      }
      out.store.add(std::move(s));
    }
  }
  return out;
}

}  // namespace dgrec
