// hwfp: fleet simulation, enrollment, the authentication service, attacks
// and evaluation sweeps from the command line.
//
// Failures print one line to stderr and exit nonzero:
//   error code=<ErrorCode> message="<text>"

#include <csignal>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hwfp/attacks.hpp"
#include "hwfp/config_io.hpp"
#include "hwfp/experiment.hpp"
#include "hwfp/fleet_io.hpp"
#include "hwfp/service.hpp"
#include "hwfp/snapshot.hpp"

using namespace hwfp;
using nlohmann::json;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  std::string config;
  std::string out;
};

TestbedConfig testbed(const Globals& g, bool seed_given) {
  TestbedConfig c = g.config.empty() ? TestbedConfig{} : load_testbed_config(g.config);
  if (seed_given || g.config.empty()) c.seed = g.seed;
  return c;
}

// Everything the CLI writes goes to --out when given, stdout otherwise.
void emit(const Globals& g, const std::string& text) {
  if (g.out.empty()) {
    std::cout << text << std::flush;
    return;
  }
  std::ofstream f(g.out, std::ios::binary);
  if (!f || !(f << text)) throw Error(ErrorCode::Io, "cannot write " + g.out);
}

std::string quote(std::string s) {
  for (auto& ch : s) {
    if (ch == '"' || ch == '\n') ch = '\'';
  }
  return "\"" + s + "\"";
}

Bytes parse_hex(const std::string& hex) {
  if (hex.size() % 2) throw Error(ErrorCode::InvalidArgument, "odd-length hex payload '" + hex + "'");
  Bytes out;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    const auto byte = hex.substr(i, 2);
    if (byte.find_first_not_of("0123456789abcdefABCDEF") != std::string::npos) {
      throw Error(ErrorCode::InvalidArgument, "bad hex payload '" + hex + "'");
    }
    out.push_back(static_cast<std::uint8_t>(std::stoul(byte, nullptr, 16)));
  }
  return out;
}

const DeviceProfile& find_device(const Fleet& fleet, std::uint16_t id) {
  for (const auto& d : fleet.devices) {
    if (d.device_id == id) return d;
  }
  throw Error(ErrorCode::UnknownDevice, "device " + std::to_string(id) + " not in fleet");
}

// ---- attack CSV -----------------------------------------------------------

struct AttackRow {
  std::string kind, variant;
  std::uint64_t seed = 0;
  std::size_t trials = 0, successes = 0;
  double rate = 0, wall_ms = 0;
};

std::string attack_csv(const std::vector<AttackRow>& rows) {
  std::ostringstream out;
  out << "attack_kind,variant,seed,trials,successes,rate,wall_time_ms\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f,%.1f", r.rate, r.wall_ms);
    out << r.kind << ',' << r.variant << ',' << r.seed << ',' << r.trials << ',' << r.successes << ','
        << buf << '\n';
  }
  return out.str();
}

template <class F>
double timed_ms(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

// ---- report ---------------------------------------------------------------

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw Error(ErrorCode::Malformed, path + " is empty");
  return rows;
}

std::string render_table(const std::string& title, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    if (width.size() < r.size()) width.resize(r.size(), 0);
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  std::ostringstream out;
  out << "## " << title << "\n\n";
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out << '|';
    for (std::size_t i = 0; i < width.size(); ++i) {
      const std::string cell = i < rows[k].size() ? rows[k][i] : "";
      out << ' ' << cell << std::string(width[i] - cell.size(), ' ') << " |";
    }
    out << '\n';
    if (k == 0) {
      out << '|';
      for (auto w : width) out << std::string(w + 2, '-') << '|';
      out << '\n';
    }
  }
  return out.str();
}

volatile std::sig_atomic_t g_stop = 0;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hwfp: hardware-fingerprint device authentication testbed"};
  app.require_subcommand(1);
  // global flags may also follow the subcommand
  app.fallthrough();
  Globals g;
  auto* seed_opt = app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--config", g.config, "Run configuration file (JSON, versioned)");
  app.add_option("--out", g.out, "Write output here instead of stdout");

  // fleet spawn
  auto* fleet_cmd = app.add_subcommand("fleet", "Simulated device fleets");
  fleet_cmd->require_subcommand(1);
  fleet_cmd->fallthrough();
  auto* spawn = fleet_cmd->add_subcommand("spawn", "Create a fleet file");
  std::string model_text = "A";
  std::uint32_t count = 10;
  spawn->add_option("--model", model_text, "A, B or C")->capture_default_str();
  spawn->add_option("--count", count, "Number of devices")->capture_default_str();

  // enroll
  auto* enroll = app.add_subcommand("enroll", "Enroll a fleet into a backend snapshot or a live server");
  std::string fleet_path, snapshot_path, connect_to;
  std::size_t pairs = 0;
  enroll->add_option("--fleet", fleet_path, "Fleet file")->required();
  enroll->add_option("--pairs", pairs, "Enrollment pairs per feature (default from config)");
  auto* enroll_target = enroll->add_option_group("target");
  enroll_target->add_option("--snapshot", snapshot_path, "Write the enrolled backend here");
  enroll_target->add_option("--connect", connect_to, "Enroll over the wire at host:port");
  enroll_target->require_option(1);

  // serve
  auto* serve = app.add_subcommand("serve", "Run the authentication service");
  std::string listen_at;
  std::string serve_snapshot;
  serve->add_option("--listen", listen_at, "host:port (default $HWFP_LISTEN, then 127.0.0.1:7878)");
  serve->add_option("--snapshot", serve_snapshot,
                    "Load from here if present; rewritten after every commit and on shutdown");

  // auth
  auto* auth = app.add_subcommand("auth", "Authenticate one request from a simulated device");
  std::uint16_t device_id = 0;
  std::string operation = "UNLOCK";
  std::vector<std::string> payload_hex;
  std::uint32_t nonce = 0;
  std::string auth_snapshot, auth_connect;
  auth->add_option("--fleet", fleet_path, "Fleet file")->required();
  auth->add_option("--device", device_id, "Device id")->required();
  auth->add_option("--operation", operation)->capture_default_str();
  auth->add_option("--payload", payload_hex, "Payload as hex; repeatable")->required();
  auth->add_option("--nonce", nonce, "Request nonce")->required();
  auto* auth_target = auth->add_option_group("target");
  auth_target->add_option("--snapshot", auth_snapshot, "Backend snapshot; updated in place");
  auth_target->add_option("--connect", auth_connect, "Server at host:port");
  auth_target->require_option(1);

  // attack
  auto* attack = app.add_subcommand("attack", "Run an attack and print one CSV row per variant");
  attack->require_subcommand(1);
  attack->fallthrough();
  std::size_t trials = 500;
  attack->add_option("--trials", trials, "Trials (rounds for replay)")->capture_default_str();
  auto* a_replay = attack->add_subcommand("replay", "Resubmit captured tokens");
  auto* a_tamper = attack->add_subcommand("tamper", "Collision search against the mapping");
  std::uint32_t tamper_d = 100;
  std::uint64_t budget = 200;
  std::vector<std::string> variants;
  a_tamper->add_option("--d", tamper_d, "Task space per round")->capture_default_str();
  a_tamper->add_option("--budget", budget, "Attempts per trial")->capture_default_str();
  a_tamper->add_option("--variant", variants, "full, h1, h3, h1h2 (default all)");
  auto* a_hw = attack->add_subcommand("mimic-hw", "Impersonate with other silicon");
  std::string attacker_model = "A";
  a_hw->add_option("--attacker-model", attacker_model)->capture_default_str();
  auto* a_sw = attack->add_subcommand("mimic-sw", "Impersonate with a learned model");
  std::size_t clean_tokens = 300;
  a_sw->add_option("--clean-tokens", clean_tokens, "Clean-traffic budget in tokens")->capture_default_str();
  auto* a_id = attack->add_subcommand("identify", "Label poisoned pairs in eavesdropped traffic");
  std::size_t tokens = 1000;
  a_id->add_option("--tokens", tokens, "Eavesdropped tokens")->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluation sweeps (CSV)");
  eval->require_subcommand(1);
  eval->fallthrough();
  std::vector<double> values;
  std::size_t eval_trials = 500;
  eval->add_option("--values", values, "Sweep points (default per sweep)");
  eval->add_option("--trials", eval_trials, "Trials per point")->capture_default_str();
  const std::map<std::string, SweepAxis> sweeps = {{"features", SweepAxis::Features},
                                                   {"sweep-usednum", SweepAxis::UsedNum},
                                                   {"sweep-acceptnum", SweepAxis::AcceptNum},
                                                   {"noise-curve", SweepAxis::Noise},
                                                   {"tamper-curve", SweepAxis::TamperD}};
  for (const auto& [name, axis] : sweeps) eval->add_subcommand(name, "Sweep over " + std::string(axis_name(axis)));

  // report
  auto* report = app.add_subcommand("report", "Render CSV results as Markdown tables");
  std::vector<std::string> inputs;
  report->add_option("inputs", inputs, "CSV files")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error code=Usage message=" << quote(e.what()) << '\n';
    return 64;
  }

  const bool seed_given = seed_opt->count() > 0;
  try {
    if (spawn->parsed()) {
      const Fleet f = make_fleet(parse_model(model_text), count, g.seed);
      emit(g, fleet_to_json(f) + "\n");
    } else if (enroll->parsed()) {
      const Fleet fleet = load_fleet(fleet_path);
      TestbedConfig cfg = testbed(g, seed_given);
      const std::size_t per = pairs ? pairs : cfg.pairs_per_feature;
      if (!snapshot_path.empty()) {
        Backend be(cfg.auth, cfg.mapping, cfg.backend);
        enroll_loopback(be, fleet.devices, per, cfg.seed);
        save_snapshot(be, snapshot_path);
      } else {
        auto conn = Connection::connect(parse_endpoint(connect_to));
        for (const auto& d : fleet.devices) {
          Rng rng = make_rng(cfg.seed, 0x656e72, d.device_id);
          conn.upload(d.device_id, d.model, enrollment_pairs(d, cfg.mapping, per, rng));
        }
        for (const auto& d : fleet.devices) conn.commit(d.device_id);
      }
      emit(g, "enrolled " + std::to_string(fleet.devices.size()) + " devices\n");
    } else if (serve->parsed()) {
      if (listen_at.empty()) {
        const char* env = std::getenv("HWFP_LISTEN");
        listen_at = env && *env ? env : "127.0.0.1:7878";
      }
      std::unique_ptr<Backend> be;
      if (!serve_snapshot.empty() && std::filesystem::exists(serve_snapshot)) {
        be = load_snapshot(serve_snapshot);
      } else {
        const TestbedConfig cfg = testbed(g, seed_given);
        be = std::make_unique<Backend>(cfg.auth, cfg.mapping, cfg.backend);
      }
      Server::CommitHook hook;
      if (!serve_snapshot.empty()) hook = [&](const Backend& b) { save_snapshot(b, serve_snapshot); };
      Server server(*be, parse_endpoint(listen_at), hook);
      server.start();
      std::signal(SIGINT, [](int) { g_stop = 1; });
      std::signal(SIGTERM, [](int) { g_stop = 1; });
      std::cerr << "listening on " << format_endpoint({parse_endpoint(listen_at).host, server.port()})
                << std::endl;
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
      if (!serve_snapshot.empty()) save_snapshot(*be, serve_snapshot);
    } else if (auth->parsed()) {
      const Fleet fleet = load_fleet(fleet_path);
      const DeviceProfile& dev = find_device(fleet, device_id);
      std::vector<Bytes> payloads;
      for (const auto& h : payload_hex) payloads.push_back(parse_hex(h));
      const Request req{operation, nonce, payloads};
      req.validate();
      Rng rng = make_rng(g.seed, 0x61757468, nonce);
      AuthResult r;
      if (!auth_snapshot.empty()) {
        auto be = load_snapshot(auth_snapshot);
        Client client(dev, be->auth(), be->mapping());
        r = be->authenticate(dev.device_id, req, client.generate_token(req, rng).token);
        save_snapshot(*be, auth_snapshot);
      } else {
        const TestbedConfig cfg = testbed(g, seed_given);
        Client client(dev, cfg.auth, cfg.mapping);
        auto conn = Connection::connect(parse_endpoint(auth_connect));
        r = conn.authenticate(dev.device_id, req, client.generate_token(req, rng).token);
      }
      emit(g, "decision=" + std::string(decision_name(r.decision)) +
                  " matched=" + std::to_string(r.matched) + " reason=" + std::string(reason_name(r.reason)) +
                  "\n");
      return r.accepted() ? 0 : 1;
    } else if (attack->parsed()) {
      const TestbedConfig cfg = testbed(g, seed_given);
      std::vector<AttackRow> rows;
      if (a_tamper->parsed()) {
        if (variants.empty()) variants = {"full", "h1", "h3", "h1h2"};
        for (const auto& v : variants) {
          MappingConfig m;
          m.total_num = 2;
          m.variant = parse_variant(v);
          m.enabled_specs = {TaskSpec{Feature::Sram, {tamper_d}}};
          RateEstimate est;
          const double ms = timed_ms([&] { est = tamper_success(m, budget, trials, 2, cfg.seed); });
          rows.push_back({"tamper", v + "/d=" + std::to_string(tamper_d) + "/budget=" + std::to_string(budget),
                          cfg.seed, est.trials, est.successes, est.rate(), ms});
        }
      } else {
        std::unique_ptr<Testbed> bed;
        const double build_ms = timed_ms([&] { bed = Testbed::build(cfg); });
        const auto victim = bed->devices().front();
        if (a_replay->parsed()) {
          Client client(victim, cfg.auth, cfg.mapping);
          Rng rng = make_rng(cfg.seed, 0x7265);
          ReplayReport rep;
          const double ms = timed_ms([&] { rep = run_replay_attack(bed->backend(), client, trials, rng); });
          const std::size_t ok = rep.replays - rep.replays_detected;
          rows.push_back({"replay", "resubmit", cfg.seed, rep.replays, ok,
                          rep.replays ? static_cast<double>(ok) / rep.replays : 0.0, ms + build_ms});
        } else if (a_hw->parsed()) {
          const Model m = parse_model(attacker_model);
          const DeviceProfile attacker =
              m == cfg.model ? bed->devices().at(1) : spawn_fleet(m, 1, cfg.seed + 7, cfg.sim).front();
          RateEstimate est;
          const double ms = timed_ms([&] {
            est = run_hw_mimic(attacker, victim.device_id, bed->backend(), trials, cfg.seed);
          });
          rows.push_back({"mimic-hw", std::string(model_name(m)) + "->" + std::string(model_name(cfg.model)),
                          cfg.seed, est.trials, est.successes, est.rate(), ms + build_ms});
        } else if (a_sw->parsed()) {
          MimicComparison cmp;
          const double ms = timed_ms([&] { cmp = compare_sw_mimic(*bed, 0, clean_tokens, trials, cfg.seed); });
          rows.push_back({"mimic-sw", "clean", cfg.seed, cmp.clean.trials, cmp.clean.successes,
                          cmp.clean.rate(), ms + build_ms});
          const auto s = all_strategies();
          for (std::size_t i = 0; i < s.size(); ++i) {
            rows.push_back({"mimic-sw", "poisoned/" + s[i].name(), cfg.seed, cmp.poisoned[i].trials,
                            cmp.poisoned[i].successes, cmp.poisoned[i].rate(), ms + build_ms});
          }
        } else if (a_id->parsed()) {
          Rng rng = make_rng(cfg.seed, 0x6964);
          const auto ev = eavesdrop_traffic(victim, cfg.auth, cfg.mapping, tokens, rng);
          IdentifyContext sup;
          sup.mapping = &cfg.mapping;
          sup.threshold = cfg.auth.noise_lo;
          double acc = 0;
          double ms = timed_ms([&] {
            acc = identify_poison(ev.pairs, ev.poisoned, IdentifyMethod::Supervised, sup, rng);
          });
          // for identification a "trial" is a token and the rate is labelling accuracy
          rows.push_back({"identify", "supervised", cfg.seed, tokens, 0, acc, ms});
          IdentifyContext extra;
          extra.oracle = &bed->devices().at(1);
          extra.threshold = cfg.auth.noise_lo / 2;
          ms = timed_ms([&] {
            acc = identify_poison(ev.pairs, ev.poisoned, IdentifyMethod::ExtraDevice, extra, rng);
          });
          rows.push_back({"identify", "extra-device", cfg.seed, tokens, 0, acc, ms});
        }
      }
      emit(g, attack_csv(rows));
    } else if (eval->parsed()) {
      ExperimentSpec spec;
      spec.testbed = testbed(g, seed_given);
      spec.trials = eval_trials;
      spec.values = values;
      for (const auto& [name, axis] : sweeps) {
        if (eval->got_subcommand(name)) {
          spec.axis = axis;
          spec.name = name;
        }
      }
      emit(g, run_experiment(spec));
    } else if (report->parsed()) {
      std::string text = "# Results\n\n";
      for (const auto& path : inputs) text += render_table(path, read_csv(path)) + "\n";
      emit(g, text);
    }
  } catch (const Error& e) {
    std::cerr << "error code=" << error_code_name(e.code()) << " message=" << quote(e.what()) << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error code=Internal message=" << quote(e.what()) << '\n';
    return 3;
  }
  return 0;
}
