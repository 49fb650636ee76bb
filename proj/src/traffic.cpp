#include "circfp/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "circfp/parallel.hpp"

namespace circfp {

namespace {

void append(std::vector<Cell>& dst, const std::vector<Cell>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

void sort_cells(std::vector<Cell>& cells) {
  std::stable_sort(cells.begin(), cells.end(),
                   [](const Cell& a, const Cell& b) { return a.time < b.time; });
}

/// Largest-remainder apportionment of total over shares; ties go to the lower index.
std::vector<std::uint32_t> apportion(std::uint32_t total, const std::vector<Burst>& bursts) {
  const double sum = std::accumulate(bursts.begin(), bursts.end(), 0.0,
                                     [](double s, const Burst& b) { return s + b.response_share; });
  std::vector<std::uint32_t> out(bursts.size());
  std::vector<std::pair<double, std::size_t>> rema;
  std::uint32_t given = 0;
  for (std::size_t i = 0; i < bursts.size(); ++i) {
    const double exact = total * bursts[i].response_share / sum;
    out[i] = static_cast<std::uint32_t>(std::floor(exact));
    given += out[i];
    rema.emplace_back(exact - out[i], i);
  }
  std::stable_sort(rema.begin(), rema.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; given < total; ++k, ++given) ++out[rema[k % rema.size()].second];
  return out;
}

}  // namespace

std::string_view connection_name(ConnectionType t) noexcept {
  return t == ConnectionType::Clearnet ? "clearnet" : "onion";
}

std::optional<ConnectionType> parse_connection(std::string_view s) noexcept {
  if (s == "clearnet") return ConnectionType::Clearnet;
  if (s == "onion") return ConnectionType::Onion;
  return std::nullopt;
}

void UserModel::validate() const {
  if (!(lambda_u > 0.0)) throw std::invalid_argument("lambda_u must be > 0");
  if (!(c >= 0.0 && c <= 1.0)) throw std::invalid_argument("c must lie in [0, 1]");
}

std::uint32_t SiteModel::request_cells() const noexcept {
  std::uint32_t n = 0;
  for (const auto& b : bursts) n += b.request_cells;
  return n;
}

void SiteModel::validate() const {
  if (bursts.empty()) throw std::invalid_argument("site needs at least one burst");
  for (const auto& b : bursts)
    if (!(b.response_share > 0.0)) throw std::invalid_argument("burst response share must be > 0");
  if (onion_cell_count < request_cells() + bursts.size())
    throw std::invalid_argument("site " + std::to_string(site_id) +
                                ": onion_cell_count too small for its burst template");
  if (!(inflation_mean >= 1.0)) throw std::invalid_argument("inflation_mean must be >= 1");
  if (!(inflation_sd >= 0.0)) throw std::invalid_argument("inflation_sd must be >= 0");
}

void SiteGenParams::validate() const {
  if (n_sites < 1) throw std::invalid_argument("n_sites must be >= 1");
  if (min_bursts < 1 || min_bursts > max_bursts)
    throw std::invalid_argument("burst range must satisfy 1 <= min <= max");
  if (min_cells > max_cells) throw std::invalid_argument("cell range must satisfy min <= max");
  if (min_cells < 3 * max_bursts)
    throw std::invalid_argument("min_cells must be at least 3 * max_bursts");
  if (!(inflation_mean >= 1.0)) throw std::invalid_argument("inflation_mean must be >= 1");
  if (!(inflation_sd >= 0.0)) throw std::invalid_argument("inflation_sd must be >= 0");
}

void SimConfig::validate() const {
  user.validate();
  if (sites.empty()) throw std::invalid_argument("sites must be non-empty");
  for (const auto& s : sites) s.validate();
  if (!(rtt > 0.0)) throw std::invalid_argument("rtt must be > 0");
  if (n_sessions < 1) throw std::invalid_argument("n_sessions must be >= 1");
  lifetime_exit.validate();
  rend_idle.validate();
  if (only_site && std::none_of(sites.begin(), sites.end(),
                                [&](const SiteModel& s) { return s.site_id == *only_site; }))
    throw std::invalid_argument("only_site " + std::to_string(*only_site) + " is not a known site");
}

CircuitId circuit_id_for(std::uint64_t session_id, CircuitSlot slot) noexcept {
  return session_id * 8 + static_cast<std::uint64_t>(slot);
}

std::vector<SiteModel> generate_sites(const SiteGenParams& params, std::uint64_t seed) {
  params.validate();
  std::vector<SiteModel> sites;
  sites.reserve(params.n_sites);
  for (std::uint32_t i = 0; i < params.n_sites; ++i) {
    Rng rng = make_rng(seed, {stream::kSites, i});
    SiteModel s;
    s.site_id = i;
    s.inflation_mean = params.inflation_mean;
    s.inflation_sd = params.inflation_sd;
    s.onion_cell_count =
        std::uniform_int_distribution<std::uint32_t>(params.min_cells, params.max_cells)(rng);
    const auto n_bursts =
        std::uniform_int_distribution<std::uint32_t>(params.min_bursts, params.max_bursts)(rng);
    s.bursts.clear();
    std::uniform_real_distribution<double> share(0.2, 1.0);
    for (std::uint32_t b = 0; b < n_bursts; ++b) s.bursts.push_back({2, share(rng)});
    sites.push_back(std::move(s));
  }
  return sites;
}

double sample_think_time(const UserModel& user, Rng& rng) {
  return std::exponential_distribution<double>(user.lambda_u)(rng);
}

double sample_inflation(const SiteModel& site, Rng& rng) {
  if (site.inflation_sd == 0.0) return std::max(1.0, site.inflation_mean);
  std::normal_distribution<double> dist(site.inflation_mean, site.inflation_sd);
  while (true) {
    const double g = dist(rng);
    if (g >= 1.0) return g;
  }
}

std::vector<Cell> app_traffic(const SiteModel& site, ConnectionType conn, PackingMode mode,
                              double base_time, double rtt, Rng& rng,
                              bool scheduling_fingerprint) {
  std::uint32_t total = site.onion_cell_count;
  if (conn == ConnectionType::Clearnet && mode == PackingMode::Asymmetric)
    total = static_cast<std::uint32_t>(std::lround(site.onion_cell_count * sample_inflation(site, rng)));
  const auto n_bursts = static_cast<std::uint32_t>(site.bursts.size());
  auto responses = apportion(total - site.request_cells() - n_bursts, site.bursts);
  for (auto& r : responses) ++r;
  if (scheduling_fingerprint && conn == ConnectionType::Clearnet) {
    Rng perm(mix64(0x5c4edULL ^ site.site_id));
    std::shuffle(responses.begin(), responses.end(), perm);
  }

  std::vector<Cell> cells;
  cells.reserve(total + site.bursts.size());
  double t = base_time;
  for (std::size_t b = 0; b < site.bursts.size(); ++b) {
    for (std::uint32_t k = 0; k < site.bursts[b].request_cells; ++k) {
      cells.push_back({t, CellDirection::Outgoing, RelayCommand::AppData, false});
      if (k + 1 < site.bursts[b].request_cells) t += kDataSpacing;
    }
    t += rtt;
    for (std::uint32_t k = 0; k < responses[b]; ++k) {
      cells.push_back({t, CellDirection::Incoming, RelayCommand::AppData, false});
      t += kDataSpacing;
    }
  }
  return cells;
}

SessionTrace simulate_session(const SimConfig& config, const SiteModel& site, Rng& rng,
                              std::uint64_t session_id) {
  const bool clear = std::bernoulli_distribution(config.user.c)(rng);
  return simulate_session(config, site, clear ? ConnectionType::Clearnet : ConnectionType::Onion,
                          rng, session_id);
}

SessionTrace simulate_session(const SimConfig& config, const SiteModel& site,
                              ConnectionType conn, Rng& rng, std::uint64_t session_id) {
  const double r = config.rtt;
  SessionTrace s;
  s.session_id = session_id;
  s.connection_type = conn;
  s.site_id = site.site_id;
  s.think_time = sample_think_time(config.user, rng);
  s.arrival = session_lead(r) + s.think_time;
  const double t0 = s.arrival;

  if (conn == ConnectionType::Clearnet) {
    CircuitTrace exit;
    exit.circuit_id = circuit_id_for(session_id, CircuitSlot::ExitRendRole);
    exit.purpose = CircuitPurpose::Exit;
    exit.created_at = t0;
    exit.cells = circuit_handshake(HandshakeKind::ExitCircuit, t0, r);
    append(exit.cells, app_traffic(site, conn, config.packing, exit.cells.back().time, r, rng,
                                   config.scheduling_fingerprint));
    sort_cells(exit.cells);
    exit.closed_at = std::max(t0 + config.lifetime_exit.sample(rng), exit.last_time());
    s.circuits.push_back(std::move(exit));
    return s;
  }

  CircuitTrace hsdir;
  hsdir.circuit_id = circuit_id_for(session_id, CircuitSlot::HsdirRole);
  hsdir.purpose = CircuitPurpose::HSDir;
  hsdir.created_at = t0;
  hsdir.cells = circuit_prologue(t0, r);
  append(hsdir.cells, real_request(RequestKind::HsdirFetch, t0 + 2 * r, r));
  hsdir.closed_at = hsdir.last_time();

  const double t1 = hsdir.last_time();
  CircuitTrace intro;
  intro.circuit_id = circuit_id_for(session_id, CircuitSlot::IntroRole);
  intro.purpose = CircuitPurpose::Intro;
  intro.created_at = t1;
  intro.cells = circuit_prologue(t1, r);
  append(intro.cells, real_request(RequestKind::IntroHandshake, t1 + 2 * r, r));
  intro.closed_at = intro.last_time();

  CircuitTrace rend;
  rend.circuit_id = circuit_id_for(session_id, CircuitSlot::ExitRendRole);
  rend.purpose = CircuitPurpose::Rend;
  rend.created_at = t1;
  rend.cells = circuit_handshake(HandshakeKind::RendCircuit, t1, r);
  append(rend.cells, app_traffic(site, conn, config.packing, rend.cells.back().time, r, rng,
                                 config.scheduling_fingerprint));
  sort_cells(rend.cells);
  rend.closed_at = rend.last_time() + config.rend_idle.sample(rng);

  s.circuits.push_back(std::move(hsdir));
  s.circuits.push_back(std::move(intro));
  s.circuits.push_back(std::move(rend));
  return s;
}

std::vector<SessionPlan> plan_sessions(const SimConfig& config) {
  config.validate();
  std::vector<SessionPlan> plan(config.n_sessions);
  std::uint32_t fixed_index = 0;
  if (config.only_site) {
    for (std::uint32_t k = 0; k < config.sites.size(); ++k)
      if (config.sites[k].site_id == *config.only_site) fixed_index = k;
  }
  for (std::uint32_t i = 0; i < config.n_sessions; ++i)
    plan[i].site_index = config.only_site ? fixed_index
                                          : static_cast<std::uint32_t>(i % config.sites.size());
  if (!config.stratified) return plan;

  for (std::uint32_t k = 0; k < config.sites.size(); ++k) {
    std::vector<std::uint32_t> members;
    for (std::uint32_t i = 0; i < config.n_sessions; ++i)
      if (plan[i].site_index == k) members.push_back(i);
    if (members.empty()) continue;
    Rng rng = make_rng(config.seed, {stream::kStratify, k});
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_clear = static_cast<std::size_t>(std::llround(config.user.c * members.size()));
    for (std::size_t j = 0; j < members.size(); ++j)
      plan[members[j]].forced = j < n_clear ? ConnectionType::Clearnet : ConnectionType::Onion;
  }
  return plan;
}

SessionTrace simulate_planned(const SimConfig& config, const SessionPlan& plan, std::uint64_t i) {
  Rng rng = make_rng(config.seed, {stream::kSession, i});
  const auto& site = config.sites.at(plan.site_index);
  if (plan.forced) return simulate_session(config, site, *plan.forced, rng, i);
  return simulate_session(config, site, rng, i);
}

std::vector<SessionTrace> simulate_dataset(const SimConfig& config, unsigned jobs) {
  const auto plan = plan_sessions(config);
  std::vector<SessionTrace> out(plan.size());
  parallel_for(plan.size(), jobs, [&](std::size_t i) { out[i] = simulate_planned(config, plan[i], i); });
  return out;
}

}  // namespace circfp
