#pragma once
/** @file trace_io.hpp
 *  @brief Ground-truth trace files: one JSON line per cell plus a per-session index. */

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "circfp/strategies.hpp"

namespace circfp {

/// {run_id, session_id, circuit_id, purpose, t, dir, cmd, pad} per cell, in that field order.
void write_trace_jsonl(std::ostream& os, const std::string& run_id,
                       std::span<const PaddedSession> sessions);

/// Session and circuit metadata the cell records cannot carry (think time, lifetimes, ...).
void write_session_index(std::ostream& os, std::span<const PaddedSession> sessions);

/// Inverse of the two writers. `source` names the input in error messages.
std::vector<PaddedSession> read_dataset(std::istream& traces, std::istream& index,
                                        const std::string& source = "<stream>");

inline constexpr const char* kTraceFile = "traces.jsonl";
inline constexpr const char* kIndexFile = "sessions.jsonl";

void save_dataset(const std::filesystem::path& dir, const std::string& run_id,
                  std::span<const PaddedSession> sessions);
std::vector<PaddedSession> load_dataset(const std::filesystem::path& dir);

}  // namespace circfp
