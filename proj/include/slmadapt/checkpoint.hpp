// slmadapt/checkpoint.hpp

// Copyright 2026  The slmadapt authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "json.hpp"
#include "slmadapt/common.hpp"
#include "slmadapt/optimizer.hpp"
#include "slmadapt/params.hpp"

namespace slmadapt {

// Binary container layout, all integers little-endian:
//   magic "SLMA", format version u32
//   config echo: u64 byte count, UTF-8 JSON
//   scalar width u8 (4 = float, 8 = double)
//   tensor section (name-sorted)
//   optimizer flag u8; if set: step i64, then two more tensor sections
//     (first and second moments)
// A tensor section is a u64 count followed by, per tensor: u64 name length,
// name bytes, u64 rows, u64 cols, then rows*cols raw scalars in row order.

constexpr char kCheckpointMagic[4] = {'S', 'L', 'M', 'A'};
constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_i64(std::ostream& os, std::int64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_u8(std::ostream& os, std::uint8_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_str(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline std::int64_t read_i64(std::istream& is) {
  std::int64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline std::uint8_t read_u8(std::istream& is) {
  std::uint8_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline std::string read_str(std::istream& is) {
  std::uint64_t n = read_u64(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

template <typename S>
void write_tensor_map(std::ostream& os,
                      const std::map<std::string, Mat<S>>& tensors) {
  write_u64(os, tensors.size());
  for (const auto& [name, t] : tensors) {
    write_str(os, name);
    write_u64(os, static_cast<std::uint64_t>(t.rows()));
    write_u64(os, static_cast<std::uint64_t>(t.cols()));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(sizeof(S) *
                                          static_cast<std::size_t>(t.size())));
  }
}

template <typename S>
std::map<std::string, Mat<S>> read_tensor_map(std::istream& is) {
  std::map<std::string, Mat<S>> out;
  const std::uint64_t count = read_u64(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = read_str(is);
    const auto rows = static_cast<Eigen::Index>(read_u64(is));
    const auto cols = static_cast<Eigen::Index>(read_u64(is));
    Mat<S> t(rows, cols);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(sizeof(S) *
                                         static_cast<std::size_t>(t.size())));
    if (!is) throw DataError(cat("checkpoint: truncated tensor '", name, "'"));
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace detail

template <typename S>
struct Checkpoint {
  json config_echo;
  std::map<std::string, Mat<S>> tensors;
  bool has_optimizer = false;
  std::int64_t opt_step = 0;
  std::map<std::string, Mat<S>> opt_m;
  std::map<std::string, Mat<S>> opt_v;
};

template <typename S>
void save_checkpoint(const std::string& path, const ParamStore<S>& params,
                     const json& config_echo,
                     const AdamOptimizer<S>* opt = nullptr) {
  namespace fs = std::filesystem;
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError(cat("checkpoint: cannot write '", path, "'"));

  os.write(kCheckpointMagic, 4);
  detail::write_u32(os, kCheckpointVersion);
  detail::write_str(os, config_echo.dump());
  detail::write_u8(os, static_cast<std::uint8_t>(sizeof(S)));

  std::map<std::string, Mat<S>> tensors;
  for (const auto& [name, t] : params) tensors.emplace(name, t);
  detail::write_tensor_map(os, tensors);

  detail::write_u8(os, opt ? 1 : 0);
  if (opt) {
    detail::write_i64(os, opt->step_count());
    detail::write_tensor_map(os, opt->first_moments());
    detail::write_tensor_map(os, opt->second_moments());
  }
  if (!os) throw DataError(cat("checkpoint: write failed for '", path, "'"));
}

template <typename S>
Checkpoint<S> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(cat("checkpoint: cannot open '", path, "'"));
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != std::string(kCheckpointMagic, 4))
    throw DataError(cat("checkpoint: bad magic in '", path, "'"));
  const std::uint32_t version = detail::read_u32(is);
  if (version != kCheckpointVersion)
    throw DataError(cat("checkpoint: unsupported format version ", version));

  Checkpoint<S> ck;
  std::string echo = detail::read_str(is);
  ck.config_echo = json::parse(echo);
  const std::uint8_t width = detail::read_u8(is);
  if (width != sizeof(S))
    throw DataError(cat("checkpoint: scalar width ", static_cast<int>(width),
                        " does not match requested ", sizeof(S)));
  ck.tensors = detail::read_tensor_map<S>(is);
  ck.has_optimizer = detail::read_u8(is) != 0;
  if (ck.has_optimizer) {
    ck.opt_step = detail::read_i64(is);
    ck.opt_m = detail::read_tensor_map<S>(is);
    ck.opt_v = detail::read_tensor_map<S>(is);
  }
  if (!is) throw DataError(cat("checkpoint: truncated file '", path, "'"));
  return ck;
}

/// Copies checkpoint tensors into an existing store. Every destination name
/// must be present with matching shape; extra checkpoint tensors error too,
/// so stale or mismatched files cannot be loaded silently.
template <typename S>
void restore_params(const Checkpoint<S>& ck, ParamStore<S>& params) {
  if (ck.tensors.size() != params.size())
    throw DataError(cat("checkpoint: holds ", ck.tensors.size(),
                        " tensors, store expects ", params.size()));
  for (auto& [name, dst] : params) {
    auto it = ck.tensors.find(name);
    if (it == ck.tensors.end())
      throw DataError(cat("checkpoint: missing tensor '", name, "'"));
    if (it->second.rows() != dst.rows() || it->second.cols() != dst.cols())
      throw DataError(cat("checkpoint: shape mismatch for '", name, "'"));
    dst = it->second;
  }
}

/// The adapter tensors alone, for the strategy that transfers text-adapted
/// adapters onto a fresh stage-1 model.
template <typename S>
ParamStore<S> extract_prefixed(const ParamStore<S>& params,
                               const std::string& prefix) {
  ParamStore<S> out;
  for (const auto& [name, t] : params) {
    if (name.rfind(prefix, 0) != 0) continue;
    out.add(name, static_cast<int>(t.rows()), static_cast<int>(t.cols())) = t;
  }
  if (out.size() == 0)
    throw UsageError(cat("extract: no tensors under prefix '", prefix, "'"));
  return out;
}

/// Attaches previously extracted tensors onto a full store, by name, with
/// shape checks. Only the named subset is touched.
template <typename S>
void attach_subset(const ParamStore<S>& subset, ParamStore<S>& params) {
  for (const auto& [name, t] : subset) {
    if (!params.has(name))
      throw DataError(cat("attach: store has no tensor '", name, "'"));
    Mat<S>& dst = params.at(name);
    if (dst.rows() != t.rows() || dst.cols() != t.cols())
      throw DataError(cat("attach: shape mismatch for '", name, "'"));
    dst = t;
  }
}

}  // namespace slmadapt
