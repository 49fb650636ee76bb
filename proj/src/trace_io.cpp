#include "circfp/trace_io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

namespace circfp {

namespace {

using ojson = nlohmann::ordered_json;

void put_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& what) {
  throw std::runtime_error(source + ":" + std::to_string(line) + ": " + what);
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error(p.string() + ": cannot open for writing");
  return os;
}

std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error(p.string() + ": cannot open for reading");
  return is;
}

}  // namespace

void write_trace_jsonl(std::ostream& os, const std::string& run_id,
                       std::span<const PaddedSession> sessions) {
  const std::string run = nlohmann::json(run_id).dump();
  std::string line;
  for (const auto& s : sessions) {
    for (const auto& c : s.circuits()) {
      const std::string prefix = "{\"run_id\":" + run + ",\"session_id\":" +
                                 std::to_string(s.base.session_id) + ",\"circuit_id\":" +
                                 std::to_string(c.circuit_id) + ",\"purpose\":\"" +
                                 std::string(purpose_name(c.purpose)) + "\",\"t\":";
      for (const auto& cell : c.cells) {
        line = prefix;
        put_double(line, cell.time);
        line += cell.direction == CellDirection::Outgoing ? ",\"dir\":\"-1\"" : ",\"dir\":\"+1\"";
        line += ",\"cmd\":\"";
        line += command_name(cell.command);
        line += cell.is_padding ? "\",\"pad\":1}\n" : "\",\"pad\":0}\n";
        os << line;
      }
    }
  }
  if (!os) throw std::runtime_error("trace write failed");
}

void write_session_index(std::ostream& os, std::span<const PaddedSession> sessions) {
  for (const auto& s : sessions) {
    ojson j;
    j["session_id"] = s.base.session_id;
    j["connection_type"] = std::string(connection_name(s.base.connection_type));
    j["site_id"] = s.base.site_id;
    j["think_time"] = s.base.think_time;
    j["arrival"] = s.base.arrival;
    j["dummy_triplets"] = s.dummy_triplets;
    j["delay_added"] = s.delay_added;
    auto circuits = ojson::array();
    auto add = [&](const CircuitTrace& c, bool added) {
      ojson cj;
      cj["circuit_id"] = c.circuit_id;
      cj["purpose"] = std::string(purpose_name(c.purpose));
      cj["created_at"] = c.created_at;
      cj["closed_at"] = c.closed_at;
      cj["added"] = added;
      circuits.push_back(std::move(cj));
    };
    for (const auto& c : s.base.circuits) add(c, false);
    for (const auto& c : s.added_circuits) add(c, true);
    j["circuits"] = std::move(circuits);
    os << j.dump() << '\n';
  }
  if (!os) throw std::runtime_error("session index write failed");
}

std::vector<PaddedSession> read_dataset(std::istream& traces, std::istream& index,
                                        const std::string& source) {
  std::vector<PaddedSession> sessions;
  std::map<std::uint64_t, std::size_t> by_session;
  std::map<std::pair<std::uint64_t, CircuitId>, CircuitTrace*> by_circuit;

  std::string line;
  std::size_t n = 0;
  const std::string index_name = source + "/" + kIndexFile;
  while (std::getline(index, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PaddedSession s;
      s.base.session_id = j.at("session_id").get<std::uint64_t>();
      auto conn = parse_connection(j.at("connection_type").get<std::string>());
      if (!conn) fail(index_name, n, "unknown connection_type");
      s.base.connection_type = *conn;
      s.base.site_id = j.at("site_id").get<std::uint32_t>();
      s.base.think_time = j.at("think_time").get<double>();
      s.base.arrival = j.at("arrival").get<double>();
      s.dummy_triplets = j.at("dummy_triplets").get<std::uint32_t>();
      s.delay_added = j.at("delay_added").get<double>();
      for (const auto& cj : j.at("circuits")) {
        CircuitTrace c;
        c.circuit_id = cj.at("circuit_id").get<CircuitId>();
        auto purpose = parse_purpose(cj.at("purpose").get<std::string>());
        if (!purpose) fail(index_name, n, "unknown purpose");
        c.purpose = *purpose;
        c.created_at = cj.at("created_at").get<double>();
        c.closed_at = cj.at("closed_at").get<double>();
        (cj.at("added").get<bool>() ? s.added_circuits : s.base.circuits).push_back(std::move(c));
      }
      if (by_session.contains(s.base.session_id)) fail(index_name, n, "duplicate session_id");
      by_session[s.base.session_id] = sessions.size();
      sessions.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      fail(index_name, n, e.what());
    }
  }
  for (auto& s : sessions) {
    for (auto& c : s.base.circuits) by_circuit[{s.base.session_id, c.circuit_id}] = &c;
    for (auto& c : s.added_circuits) by_circuit[{s.base.session_id, c.circuit_id}] = &c;
  }

  n = 0;
  const std::string trace_name = source + "/" + kTraceFile;
  while (std::getline(traces, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto sid = j.at("session_id").get<std::uint64_t>();
      const auto cid = j.at("circuit_id").get<CircuitId>();
      auto it = by_circuit.find({sid, cid});
      if (it == by_circuit.end()) fail(trace_name, n, "cell of a circuit missing from the index");
      Cell cell;
      cell.time = j.at("t").get<double>();
      const auto dir = j.at("dir").get<std::string>();
      if (dir == "-1")
        cell.direction = CellDirection::Outgoing;
      else if (dir == "+1")
        cell.direction = CellDirection::Incoming;
      else
        fail(trace_name, n, "dir must be \"+1\" or \"-1\"");
      auto cmd = parse_command(j.at("cmd").get<std::string>());
      if (!cmd) fail(trace_name, n, "unknown cmd");
      cell.command = *cmd;
      cell.is_padding = j.at("pad").get<int>() != 0;
      it->second->cells.push_back(cell);
    } catch (const nlohmann::json::exception& e) {
      fail(trace_name, n, e.what());
    }
  }
  return sessions;
}

void save_dataset(const std::filesystem::path& dir, const std::string& run_id,
                  std::span<const PaddedSession> sessions) {
  if (sessions.empty()) throw std::invalid_argument("refusing to export an empty dataset");
  std::filesystem::create_directories(dir);
  auto traces = open_out(dir / kTraceFile);
  write_trace_jsonl(traces, run_id, sessions);
  auto index = open_out(dir / kIndexFile);
  write_session_index(index, sessions);
}

std::vector<PaddedSession> load_dataset(const std::filesystem::path& dir) {
  auto traces = open_in(dir / kTraceFile);
  auto index = open_in(dir / kIndexFile);
  return read_dataset(traces, index, dir.string());
}

}  // namespace circfp
