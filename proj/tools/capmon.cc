// Copyright 2026 The capmon Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// capmon: scenario runner, attestation and verification front-end.
//
//   capmon run CONFIG SCRIPT [--mode=step|concurrent] [--seed=N]
//              [--quantum=N] [--trace=FILE] [--dump=FILE] [--attest=NAME]...
//   capmon attest DUMP SUBJECT [--by=NAME] [--nonce=HEX] [--out=FILE]
//   capmon verify REPORT --key=HEX --pcr=HEX [--nonce=HEX]
//              [--confidential=NAME] [--encapsulated=CHILD,PARENT]
//   capmon key CONFIG
//   capmon oracle CONFIG TRACE
//
// Exit codes: 0 success, 1 failed expectation or rejected report, 2 parse
// or usage error.

#include <atomic>
#include <condition_variable>
#include <fstream>
#include <iostream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "capmon/attestation.h"
#include "capmon/dump.h"
#include "capmon/oracle.h"
#include "capmon/replay.h"
#include "capmon/scenario.h"

namespace capmon {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitFail = 1;
constexpr int kExitParse = 2;

std::optional<std::string> ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool WriteFile(const std::string& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  return static_cast<bool>(out);
}

int ParseFailure(const std::string& what) {
  std::cerr << "capmon: " << what << "\n";
  return kExitParse;
}

Result<MachineConfig> LoadConfig(const std::string& path) {
  auto text = ReadFile(path);
  if (!text) return MakeError(ErrorCode::kParseError, "cannot read " + path);
  return MachineConfig::Parse(*text);
}

// One thread per core issuing random accesses while the script runs. A
// probe steps aside (unbinds its core) whenever the script itself touches
// memory through a core.
class Probes {
 public:
  Probes(Machine& machine, uint64_t seed) : machine_(machine) {
    machine_.set_record_accesses(false);
    for (CoreId c = 0; c < machine.config().cores; ++c) {
      counts_.push_back(std::make_unique<Count>());
      threads_.emplace_back([this, c, seed] { Run(c, seed + c); });
    }
  }
  ~Probes() { Stop(); }

  void Pause() {
    std::unique_lock<std::mutex> lock(mu_);
    paused_ = true;
    cv_.wait(lock, [&] { return aside_ == threads_.size() || stop_; });
  }
  void Resume() {
    std::lock_guard<std::mutex> lock(mu_);
    paused_ = false;
    cv_.notify_all();
  }
  void Stop() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      stop_ = true;
      cv_.notify_all();
    }
    for (auto& t : threads_) {
      if (t.joinable()) t.join();
    }
  }
  void Report(std::ostream& out) const {
    for (size_t c = 0; c < counts_.size(); ++c) {
      out << "probe core " << c << ": " << counts_[c]->total << " accesses, "
          << counts_[c]->allowed << " allowed\n";
    }
  }

 private:
  struct Count {
    std::atomic<uint64_t> total{0};
    std::atomic<uint64_t> allowed{0};
  };

  void Run(CoreId core, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<uint64_t> addr(0, machine_.config().memory - 1);
    while (true) {
      {
        std::unique_lock<std::mutex> lock(mu_);
        if (stop_) return;
        if (paused_) {
          ++aside_;
          cv_.notify_all();
          cv_.wait(lock, [&] { return !paused_ || stop_; });
          --aside_;
          continue;
        }
      }
      Machine::CoreScope scope(machine_, core);
      for (int i = 0; i < 256; ++i) {
        AccessKind kind = static_cast<AccessKind>(1u << (rng() % 3));
        bool ok = machine_.Access(core, addr(rng), kind);
        ++counts_[core]->total;
        if (ok) ++counts_[core]->allowed;
      }
    }
  }

  Machine& machine_;
  std::vector<std::unique_ptr<Count>> counts_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool paused_ = false;
  bool stop_ = false;
  size_t aside_ = 0;
};

struct RunArgs {
  std::string config;
  std::string script;
  std::string mode = "step";
  std::optional<uint64_t> seed;
  std::optional<uint64_t> quantum;
  std::string trace;
  std::string dump;
  std::vector<std::string> attest;
  bool verbose = false;
};

int Run(const RunArgs& args) {
  auto config = LoadConfig(args.config);
  if (!config.ok()) return ParseFailure(config.error().ToString());
  if (args.seed) config->seed = *args.seed;
  if (args.quantum) config->quantum = *args.quantum;
  auto text = ReadFile(args.script);
  if (!text) return ParseFailure("cannot read " + args.script);
  auto script = ParseScenario(*text);
  if (!script.ok()) return ParseFailure(args.script + ": " + script.error().detail);

  Mode mode = args.mode == "concurrent" ? Mode::kConcurrent : Mode::kStep;
  auto booted = Boot(*config, mode);
  if (!booted.ok()) return ParseFailure(booted.error().ToString());
  System& sys = *booted;

  ScenarioOptions options;
  if (args.verbose) options.echo = &std::cout;
  std::unique_ptr<Probes> probes;
  if (mode == Mode::kConcurrent) {
    probes = std::make_unique<Probes>(*sys.machine, config->seed);
    options.pause_cores = [&] { probes->Pause(); };
    options.resume_cores = [&] { probes->Resume(); };
  }
  ScenarioRunner runner(sys, options);
  ScenarioResult result = runner.Run(*script);
  if (probes) {
    probes->Stop();
    probes->Report(std::cout);
  }
  for (const auto& m : result.messages) std::cerr << args.script << ": " << m << "\n";

  if (!args.trace.empty()) {
    std::string trace;
    for (const LogEntry& e : sys.engine->log()) trace += FormatLogEntry(e) + "\n";
    if (!WriteFile(args.trace, trace)) return ParseFailure("cannot write " + args.trace);
  }
  if (!args.dump.empty() && !WriteFile(args.dump, DumpState(sys, &runner))) {
    return ParseFailure("cannot write " + args.dump);
  }
  for (const std::string& name : args.attest) {
    // A report the script bound with "as NAME", else td0 attests NAME.
    std::optional<AttestationReport> report;
    if (auto it = runner.reports().find(name); it != runner.reports().end()) {
      report = it->second;
    } else {
      auto r = runner.AttestByName(name, "td0", std::nullopt);
      if (!r.ok()) {
        std::cerr << "attest " << name << ": " << r.error().ToString() << "\n";
        result.exit_code = std::max(result.exit_code, kExitFail);
        continue;
      }
      report = *r;
    }
    std::vector<uint8_t> bytes = Serialize(*report);
    std::string text_form = RenderText(*report);
    if (!WriteFile(name + ".report",
                   std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                    bytes.size())) ||
        !WriteFile(name + ".txt", text_form)) {
      return ParseFailure("cannot write report " + name);
    }
    std::cout << text_form;
  }
  if (result.exit_code == kExitOk) {
    std::cout << args.script << ": ok (" << script->size() << " statements)\n";
  }
  return result.exit_code;
}

int AttestCmd(const std::string& dump_path, const std::string& subject,
              const std::string& by, const std::string& nonce_hex,
              const std::string& out) {
  auto text = ReadFile(dump_path);
  if (!text) return ParseFailure("cannot read " + dump_path);
  auto dump = LoadDump(*text);
  if (!dump.ok()) return ParseFailure(dump.error().ToString());
  auto sys = ReplayLog(dump->config, dump->log);
  if (!sys.ok()) return ParseFailure(sys.error().ToString());

  auto resolve = [&](const std::string& name) -> std::optional<DomainId> {
    if (auto it = dump->domain_names.find(name); it != dump->domain_names.end()) {
      return ParseDomainName(it->second);
    }
    return ParseDomainName(name);
  };
  auto caller = resolve(by);
  if (!caller) return ParseFailure("unknown requester " + by);
  std::optional<Handle> handle;
  if (subject != "self") {
    auto target = resolve(subject);
    if (!target) return ParseFailure("unknown subject " + subject);
    const DomainNode* node = sys->engine->FindDomain(*caller);
    if (node != nullptr) {
      for (Handle h = 0; h < node->owned.size() && !handle; ++h) {
        const auto& cap = node->owned[h];
        if (cap && cap->kind != Capability::Kind::kRegion && cap->domain == *target) {
          handle = h;
        }
      }
    }
    if (!handle) {
      std::cerr << by << " holds no capability to " << subject << "\n";
      return kExitFail;
    }
  }
  std::optional<std::vector<uint8_t>> nonce;
  if (!nonce_hex.empty()) {
    nonce = FromHex(nonce_hex);
    if (!nonce) return ParseFailure("bad nonce");
  }
  auto report = Attest(*sys->engine, *sys->key, sys->measurement, *caller, handle, nonce);
  if (!report.ok()) {
    std::cerr << "attest: " << report.error().ToString() << "\n";
    return kExitFail;
  }
  if (!out.empty()) {
    std::vector<uint8_t> bytes = Serialize(*report);
    if (!WriteFile(out, std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                         bytes.size()))) {
      return ParseFailure("cannot write " + out);
    }
  }
  std::cout << RenderText(*report);
  return kExitOk;
}

int VerifyCmd(const std::string& report_path, const std::string& key_hex,
              const std::string& pcr_hex, const std::string& nonce_hex,
              const std::vector<std::string>& confidential,
              const std::vector<std::string>& encapsulated) {
  auto data = ReadFile(report_path);
  if (!data) return ParseFailure("cannot read " + report_path);
  auto key = FixedFromHex<32>(key_hex);
  auto pcr = FixedFromHex<32>(pcr_hex);
  if (!key || !pcr) return ParseFailure("key and pcr must be 32-byte hex");
  std::optional<std::vector<uint8_t>> nonce;
  if (!nonce_hex.empty()) {
    nonce = FromHex(nonce_hex);
    if (!nonce) return ParseFailure("bad nonce");
  }
  std::span<const uint8_t> bytes(reinterpret_cast<const uint8_t*>(data->data()),
                                 data->size());
  auto parsed = ParseReport(bytes);
  if (!parsed.ok()) {
    std::cout << "reject: " << ErrorName(parsed.code()) << "\n";
    return kExitParse;
  }
  Status st = VerifyReport(bytes, *key, *pcr, nonce);
  if (!st.ok()) {
    std::cout << "reject: " << ErrorName(st.code()) << "\n";
    return kExitFail;
  }
  std::cout << "accept\n";
  int code = kExitOk;
  for (const std::string& subject : confidential) {
    auto v = IsConfidential(*parsed, subject);
    if (!v.ok()) {
      std::cout << "is_confidential(" << subject << "): " << v.error().ToString() << "\n";
      code = kExitFail;
      continue;
    }
    std::cout << "is_confidential(" << subject << ") " << v->ToString();
    if (!v->holds) code = kExitFail;
  }
  for (const std::string& pair : encapsulated) {
    size_t comma = pair.find(',');
    if (comma == std::string::npos) return ParseFailure("--encapsulated CHILD,PARENT");
    std::string child = pair.substr(0, comma);
    std::string parent = pair.substr(comma + 1);
    auto v = IsEncapsulated(*parsed, child, parent);
    if (!v.ok()) {
      std::cout << "is_encapsulated(" << pair << "): " << v.error().ToString() << "\n";
      code = kExitFail;
      continue;
    }
    std::cout << "is_encapsulated(" << child << ", " << parent << ") " << v->ToString();
    if (!v->holds) code = kExitFail;
  }
  return code;
}

int KeyCmd(const std::string& config_path) {
  auto config = LoadConfig(config_path);
  if (!config.ok()) return ParseFailure(config.error().ToString());
  auto sys = Boot(*config);
  if (!sys.ok()) return ParseFailure(sys.error().ToString());
  std::cout << "key " << ToHex(sys->key->public_key()) << "\n";
  std::cout << "pcr " << ToHex(sys->measurement.pcr) << "\n";
  for (const BootEvent& e : sys->measurement.events) {
    std::cout << "event " << e.description << " " << ToHex(e.digest) << "\n";
  }
  return kExitOk;
}

int OracleCmd(const std::string& config_path, const std::string& trace_path) {
  auto config = LoadConfig(config_path);
  if (!config.ok()) return ParseFailure(config.error().ToString());
  auto text = ReadFile(trace_path);
  if (!text) return ParseFailure("cannot read " + trace_path);
  auto log = ParseLog(*text);
  if (!log.ok()) return ParseFailure(log.error().ToString());
  auto oracle = Oracle::Replay(*log);
  if (!oracle.ok()) return ParseFailure(oracle.error().ToString());
  for (uint64_t d : oracle->LiveDomains()) {
    std::cout << "td" << d << ":";
    auto map = oracle->AddressMap(d);
    // Print maximal runs of pages with equal access.
    std::optional<uint64_t> run_start;
    uint64_t prev = 0;
    PageAccess acc;
    auto flush = [&] {
      if (!run_start) return;
      std::cout << " " << (acc.exclusive ? "X" : "S") << "[" << Hex(*run_start)
                << "," << Hex(prev + kPageSize) << ")"
                << AccessRights(acc.rights).ToString();
    };
    for (const auto& [page, a] : map) {
      if (run_start && page == prev + kPageSize && a == acc) {
        prev = page;
        continue;
      }
      flush();
      run_start = page;
      prev = page;
      acc = a;
    }
    flush();
    std::cout << "\n";
  }
  auto sys = ReplayLog(*config, *log);
  if (!sys.ok()) {
    std::cerr << "replay: " << sys.error().ToString() << "\n";
    return kExitFail;
  }
  std::vector<std::string> diffs = oracle->Diff(*sys->engine);
  for (const auto& d : diffs) std::cout << "diff: " << d << "\n";
  std::cout << (diffs.empty() ? "oracle agrees\n" : "oracle disagrees\n");
  return diffs.empty() ? kExitOk : kExitFail;
}

}  // namespace
}  // namespace capmon

int main(int argc, char** argv) {
  using namespace capmon;
  CLI::App app{"capmon: capability monitor simulator"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario script");
  run_cmd->add_option("config", run.config, "Machine config")->required();
  run_cmd->add_option("script", run.script, "Scenario script")->required();
  run_cmd->add_option("--mode", run.mode, "step or concurrent")
      ->check(CLI::IsMember({"step", "concurrent"}));
  run_cmd->add_option("--seed", run.seed, "Override the config seed");
  run_cmd->add_option("--quantum", run.quantum, "Switch quantum in steps");
  run_cmd->add_option("--trace", run.trace, "Write the operation log here");
  run_cmd->add_option("--dump", run.dump, "Write the final state (JSON) here");
  run_cmd->add_option("--attest", run.attest,
                      "Write NAME.report and NAME.txt for this domain or report");
  run_cmd->add_flag("-v,--verbose", run.verbose, "Echo statements");

  std::string dump, subject, by = "td0", nonce, out;
  auto* attest_cmd = app.add_subcommand("attest", "Attest a domain of a dumped state");
  attest_cmd->add_option("dump", dump, "State dump from run --dump")->required();
  attest_cmd->add_option("subject", subject, "Domain to attest, or self")->required();
  attest_cmd->add_option("--by", by, "Requesting domain");
  attest_cmd->add_option("--nonce", nonce, "Nonce (hex)");
  attest_cmd->add_option("--out", out, "Write the binary report here");

  std::string report, key, pcr, vnonce;
  std::vector<std::string> confidential, encapsulated;
  auto* verify_cmd = app.add_subcommand("verify", "Verify a report");
  verify_cmd->add_option("report", report, "Binary report")->required();
  verify_cmd->add_option("--key", key, "Attestation public key (hex)")->required();
  verify_cmd->add_option("--pcr", pcr, "Expected monitor measurement (hex)")->required();
  verify_cmd->add_option("--nonce", vnonce, "Expected nonce (hex)");
  verify_cmd->add_option("--confidential", confidential, "Check is_confidential");
  verify_cmd->add_option("--encapsulated", encapsulated,
                         "Check is_encapsulated, as CHILD,PARENT");

  std::string key_config;
  auto* key_cmd = app.add_subcommand("key", "Print attestation key and PCR");
  key_cmd->add_option("config", key_config, "Machine config")->required();

  std::string oracle_config, trace;
  auto* oracle_cmd = app.add_subcommand("oracle", "Replay a trace through the oracle");
  oracle_cmd->add_option("config", oracle_config, "Machine config")->required();
  oracle_cmd->add_option("trace", trace, "Trace from run --trace")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (*run_cmd) return Run(run);
  if (*attest_cmd) return AttestCmd(dump, subject, by, nonce, out);
  if (*verify_cmd) {
    return VerifyCmd(report, key, pcr, vnonce, confidential, encapsulated);
  }
  if (*key_cmd) return KeyCmd(key_config);
  if (*oracle_cmd) return OracleCmd(oracle_config, trace);
  return 2;
}
