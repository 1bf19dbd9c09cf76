#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dgrec/adam.hpp"
#include "dgrec/autodiff.hpp"
#include "dgrec/tensor.hpp"

namespace dgrec {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_i64(std::ostream& os, std::int64_t v) {
  put_u64(os, static_cast<std::uint64_t>(v));
}

inline void put_f32(std::ostream& os, float v) {
  std::uint32_t u;
  static_assert(sizeof(u) == sizeof(v));
  std::memcpy(&u, &v, 4);
  put_u32(os, u);
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) {
    throw IoError("unexpected end of file");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw IoError("unexpected end of file");
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::int64_t get_i64(std::istream& is) {
  return static_cast<std::int64_t>(get_u64(is));
}

inline float get_f32(std::istream& is) {
  std::uint32_t u = get_u32(is);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

inline void put_str(std::ostream& os, const std::string& s) {
  put_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_str(std::istream& is) {
  std::uint64_t n = get_u64(is);
  std::string s(n, '\0');
  if (n && !is.read(s.data(), static_cast<std::streamsize>(n))) {
    throw IoError("unexpected end of file in string");
  }
  return s;
}

}  // namespace detail

// Commit `write` to `path` through a temp file + rename so readers never see
// a partial file.
template <class WriteFn>
void atomic_write_file(const std::string& path, WriteFn write) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + tmp);
    write(os);
    if (!os) throw IoError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw IoError("rename failed: " + tmp + " -> " + path);
  }
}

// Checkpoint container: magic "DGRC1", version byte, u64 entry count, then
// per entry: name (u64 length + bytes), u64 rank, u64 dims, row-major f32
// little-endian payload.
struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

inline void write_checkpoint(const std::string& path,
                             const std::vector<CheckpointEntry>& entries) {
  atomic_write_file(path, [&](std::ostream& os) {
    os.write("DGRC1", 5);
    os.put(1);
    detail::put_u64(os, entries.size());
    for (const auto& e : entries) {
      detail::put_str(os, e.name);
      detail::put_u64(os, e.shape.size());
      for (std::size_t d : e.shape) detail::put_u64(os, d);
      for (float v : e.data) detail::put_f32(os, v);
    }
  });
}

inline std::vector<CheckpointEntry> read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[5];
  if (!is.read(magic, 5) || std::string(magic, 5) != "DGRC1") {
    throw IoError("bad checkpoint magic in " + path);
  }
  int version = is.get();
  if (version != 1) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  std::uint64_t count = detail::get_u64(is);
  std::vector<CheckpointEntry> entries;
  entries.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = detail::get_str(is);
    std::uint64_t rank = detail::get_u64(is);
    std::size_t n = 1;
    for (std::uint64_t r = 0; r < rank; ++r) {
      e.shape.push_back(static_cast<std::size_t>(detail::get_u64(is)));
      n *= e.shape.back();
    }
    if (rank == 0) n = 0;
    e.data.resize(n);
    for (std::size_t j = 0; j < n; ++j) e.data[j] = detail::get_f32(is);
    entries.push_back(std::move(e));
  }
  return entries;
}

template <class Real>
CheckpointEntry snapshot_param(const Param<Real>& p) {
  CheckpointEntry e;
  e.name = p.name;
  e.shape = p.value.shape();
  e.data.resize(p.value.size());
  for (std::size_t i = 0; i < e.data.size(); ++i) {
    e.data[i] = static_cast<float>(p.value[i]);
  }
  return e;
}

template <class Real>
void save_params(const std::string& path,
                 const std::vector<Param<Real>*>& params) {
  std::vector<CheckpointEntry> entries;
  entries.reserve(params.size());
  for (const Param<Real>* p : params) entries.push_back(snapshot_param(*p));
  write_checkpoint(path, entries);
}

template <class Real>
void assign_entry(Param<Real>& p, const CheckpointEntry& e) {
  if (e.shape != p.value.shape()) {
    throw IoError("checkpoint entry '" + e.name + "' has shape " +
                  shape_str(e.shape) + " but model expects " +
                  shape_str(p.value.shape()) +
                  " (checkpoint/vocab dimension mismatch)");
  }
  for (std::size_t i = 0; i < e.data.size(); ++i) {
    p.value[i] = static_cast<Real>(e.data[i]);
  }
}

template <class Real>
void load_params(const std::string& path,
                 const std::vector<Param<Real>*>& params) {
  auto entries = read_checkpoint(path);
  std::map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  for (Param<Real>* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) {
      throw IoError("checkpoint " + path + " is missing parameter '" +
                    p->name + "'");
    }
    assign_entry(*p, *it->second);
  }
}

// Adam state shares the DGRC1 container: per parameter "<name>/m" and
// "<name>/v" moment tensors plus a scalar "adam/step".
template <class Real>
void save_adam(const std::string& path, const Adam<Real>& adam) {
  std::vector<CheckpointEntry> entries;
  std::vector<std::string> names;
  for (const auto& [name, mo] : adam.state()) names.push_back(name);
  std::sort(names.begin(), names.end());
  for (const auto& name : names) {
    const auto& mo = adam.state().at(name);
    CheckpointEntry m{name + "/m", mo.m.shape(), {}};
    CheckpointEntry v{name + "/v", mo.v.shape(), {}};
    m.data.resize(mo.m.size());
    v.data.resize(mo.v.size());
    for (std::size_t i = 0; i < mo.m.size(); ++i) {
      m.data[i] = static_cast<float>(mo.m[i]);
      v.data[i] = static_cast<float>(mo.v[i]);
    }
    entries.push_back(std::move(m));
    entries.push_back(std::move(v));
  }
  CheckpointEntry step{"adam/step", Shape{1},
                       {static_cast<float>(adam.step_count())}};
  entries.push_back(std::move(step));
  write_checkpoint(path, entries);
}

template <class Real>
void load_adam(const std::string& path, Adam<Real>& adam) {
  auto entries = read_checkpoint(path);
  std::unordered_map<std::string, typename Adam<Real>::Moments> st;
  std::int64_t step = 0;
  for (const auto& e : entries) {
    if (e.name == "adam/step") {
      if (e.data.size() != 1) throw IoError("bad adam/step entry");
      step = static_cast<std::int64_t>(e.data[0]);
      continue;
    }
    auto slash = e.name.rfind('/');
    if (slash == std::string::npos) {
      throw IoError("unexpected adam state entry '" + e.name + "'");
    }
    std::string base = e.name.substr(0, slash);
    std::string kind = e.name.substr(slash + 1);
    Tensor<Real> t(e.shape);
    for (std::size_t i = 0; i < e.data.size(); ++i) {
      t[i] = static_cast<Real>(e.data[i]);
    }
    if (kind == "m") {
      st[base].m = std::move(t);
    } else if (kind == "v") {
      st[base].v = std::move(t);
    } else {
      throw IoError("unexpected adam state entry '" + e.name + "'");
    }
  }
  adam.restore(std::move(st), step);
}

}  // namespace dgrec
