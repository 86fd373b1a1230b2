// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>
#include <httplib.h>

#include <csignal>
#include <cstdio>
#include <json.hpp>
#include <sstream>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include "latentrank/transcript.hpp"
#include "support.hpp"

#ifndef LATENTRANK_CLI_PATH
#error "LATENTRANK_CLI_PATH must name the CLI binary"
#endif

using namespace testsupport;
using nlohmann::json;

namespace {

struct Result {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Runs the CLI with `args` inside `cwd`, capturing stdout and stderr.
Result run(const TempDir& cwd, const std::vector<std::string>& args) {
  const auto out_path = cwd / ".stdout";
  const auto err_path = cwd / ".stderr";
  const pid_t pid = fork();
  REQUIRE(pid >= 0);
  if (pid == 0) {
    if (chdir(cwd.path().c_str()) != 0) _exit(127);
    const int o = open(out_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    const int e = open(err_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    dup2(o, 1);
    dup2(e, 2);
    std::vector<char*> argv{const_cast<char*>(LATENTRANK_CLI_PATH)};
    for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    execv(argv[0], argv.data());
    _exit(127);
  }
  int status = 0;
  waitpid(pid, &status, 0);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(out_path), read_file(err_path)};
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);)
    if (!l.empty()) out.push_back(l);
  return out;
}

void write_embeddings(const TempDir& dir, std::size_t n, std::size_t e, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::string jsonl;
  for (std::size_t i = 0; i < n; ++i)
    jsonl += json{{"id", "m" + std::to_string(i)}, {"text", "motion " + std::to_string(i)},
                  {"embedding", gaussian(rng, e)}}.dump() + "\n";
  write_file(dir / "emb.jsonl", jsonl);
}

}  // namespace

TEST_SUITE("optimize") {
  TEST_CASE("sphere run improves and writes its artifacts") {
    TempDir dir;
    const auto r = run(dir, {"optimize", "--objective", "sphere", "--d", "2", "--rounds", "10,5", "--seed", "1"});
    REQUIRE_MESSAGE(r.exit_code == 0, r.err);
    REQUIRE(std::filesystem::exists(dir / "transcript.jsonl"));
    REQUIRE(std::filesystem::exists(dir / "transcript.result.json"));
    const auto t = latentrank::read_transcript(dir / "transcript.jsonl");
    REQUIRE_FALSE(t.records.empty());
    // Round-0 best recomputed from the logged candidates.
    double initial = 1e300;
    for (const auto& z : t.records.front().candidates) initial = std::min(initial, dot(z, z));
    const auto res = json::parse(read_file(dir / "transcript.result.json"));
    const auto z = res.at("z_star_star").get<std::vector<double>>();
    CHECK(dot(z, z) < initial);
    CHECK(res.at("final_f").get<double>() == doctest::Approx(dot(z, z)));
    CHECK(r.out.find("final_f=") != std::string::npos);
  }

  TEST_CASE("missing objective prints usage and fails") {
    TempDir dir;
    const auto r = run(dir, {"optimize", "--d", "2"});
    CHECK(r.exit_code != 0);
    CHECK(r.err.find("--objective") != std::string::npos);
    CHECK(r.err.find("Usage") != std::string::npos);
  }

  TEST_CASE("bad flag values fail") {
    TempDir dir;
    CHECK(run(dir, {"optimize", "--objective", "sphere", "--gamma", "1.5"}).exit_code != 0);
    CHECK(run(dir, {"optimize", "--objective", "sphere", "--rounds", "3"}).exit_code != 0);
    CHECK(run(dir, {"optimize", "--objective", "nope"}).exit_code != 0);
    CHECK(run(dir, {"frobnicate"}).exit_code != 0);
  }

  TEST_CASE("same flags give byte-identical transcripts") {
    TempDir dir;
    const std::vector<std::string> base{"optimize", "--objective", "rosenbrock", "--d", "4",
                                        "--rounds", "6,3", "--seed", "9"};
    auto a = base, b = base;
    a.insert(a.end(), {"-o", "a.jsonl"});
    b.insert(b.end(), {"-o", "b.jsonl"});
    REQUIRE(run(dir, a).exit_code == 0);
    REQUIRE(run(dir, b).exit_code == 0);
    CHECK(read_file(dir / "a.jsonl") == read_file(dir / "b.jsonl"));
    CHECK(read_file(dir / "a.result.json") == read_file(dir / "b.result.json"));
  }

  TEST_CASE("global flags are accepted after the subcommand") {
    TempDir dir;
    const auto r = run(dir, {"optimize", "--objective", "sphere", "--d", "3", "--rounds", "2,1",
                             "--seed", "4", "--output", "x.jsonl"});
    CHECK(r.exit_code == 0);
    CHECK(std::filesystem::exists(dir / "x.jsonl"));
    const auto rep = run(dir, {"replay", "x.jsonl"});
    REQUIRE(rep.exit_code == 0);
    CHECK(json::parse(rep.out).at("z_star_star") ==
          json::parse(read_file(dir / "x.result.json")).at("z_star_star"));
  }
}

TEST_SUITE("benchmark") {
  TEST_CASE("three objectives by five seeds give fifteen rows") {
    TempDir dir;
    const auto r = run(dir, {"benchmark", "--objectives", "sphere", "rosenbrock", "embedding_quadratic",
                             "--seeds", "5", "--rounds", "3,1", "--d", "4", "--threads", "3"});
    REQUIRE_MESSAGE(r.exit_code == 0, r.err);
    const auto rows = lines_of(r.out);
    REQUIRE(rows.size() == 16);
    CHECK(rows[0].rfind("objective,d,m,k", 0) == 0);
  }

  TEST_CASE("grid file and malformed grid") {
    TempDir dir;
    write_file(dir / "grid.json",
               R"({"objectives":["sphere"],"configs":[{"d":3},{"d":5}],"seeds":[1,2],"rounds":[2,1]})");
    const auto r = run(dir, {"benchmark", "--grid", "grid.json", "-o", "report.csv"});
    REQUIRE(r.exit_code == 0);
    CHECK(lines_of(read_file(dir / "report.csv")).size() == 5);
    write_file(dir / "bad.json", R"({"objectives":"sphere"})");
    CHECK(run(dir, {"benchmark", "--grid", "bad.json"}).exit_code != 0);
    write_file(dir / "broken.json", "{");
    CHECK(run(dir, {"benchmark", "--grid", "broken.json"}).exit_code != 0);
  }

  TEST_CASE("sigma sweep dispersion strictly increases") {
    TempDir dir;
    write_embeddings(dir, 10, 8, 1);
    REQUIRE(run(dir, {"priors", "build", "--embeddings", "emb.jsonl", "--k", "2", "--latent-dim", "16",
                      "-o", "store.json"}).exit_code == 0);
    const auto r = run(dir, {"benchmark", "--sigma-sweep", "--store", "store.json", "--draws", "2000"});
    REQUIRE_MESSAGE(r.exit_code == 0, r.err);
    const auto rows = lines_of(r.out);
    REQUIRE(rows.size() == 6);
    double prev = -1.0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const double dispersion = std::stod(rows[i].substr(rows[i].find(',', rows[i].find(',') + 1) + 1));
      CHECK(dispersion > prev);
      prev = dispersion;
    }
  }
}

TEST_SUITE("priors") {
  TEST_CASE("build, select, attach, sample") {
    TempDir dir;
    write_embeddings(dir, 50, 12, 2);
    const auto b = run(dir, {"priors", "build", "--embeddings", "emb.jsonl", "--latent-dim", "6", "--seed", "3"});
    REQUIRE_MESSAGE(b.exit_code == 0, b.err);
    const auto store = json::parse(read_file(dir / "store.json"));
    REQUIRE(store.at("entries").size() == 5);

    // Own embedding selects the entry itself.
    const auto& e2 = store.at("entries").at(2);
    write_file(dir / "q.json", e2.at("embedding").dump());
    const auto s = run(dir, {"priors", "select", "--store", "store.json", "--embedding", "@q.json"});
    REQUIRE(s.exit_code == 0);
    CHECK(json::parse(s.out).at("id") == e2.at("id"));

    REQUIRE(run(dir, {"optimize", "--objective", "sphere", "--d", "6", "--rounds", "4,2", "-o", "t.jsonl"}).exit_code == 0);
    const auto a = run(dir, {"priors", "attach", "--store", "store.json", "--id", e2.at("id"),
                             "--transcript", "t.jsonl", "--sigma", "1e-12"});
    REQUIRE_MESSAGE(a.exit_code == 0, a.err);
    const auto attached = json::parse(read_file(dir / "store.json")).at("entries").at(2);
    CHECK(attached.at("z_star_star") == json::parse(read_file(dir / "t.result.json")).at("z_star_star"));

    const auto smp = run(dir, {"priors", "sample", "--store", "store.json", "--id", e2.at("id"),
                               "--count", "3", "--trajectories"});
    REQUIRE_MESSAGE(smp.exit_code == 0, smp.err);
    const auto lines = lines_of(smp.out);
    REQUIRE(lines.size() == 3);
    const auto first = json::parse(lines[0]);
    CHECK(first.at("trajectory").at("points").size() == 120);
    const auto z = first.at("latent").get<std::vector<double>>();
    const auto zz = attached.at("z_star_star").get<std::vector<double>>();
    CHECK(sq_dist(z, zz) < 1e-12);
  }

  TEST_CASE("select matches a brute-force scan for 100 queries") {
    TempDir dir;
    write_embeddings(dir, 30, 10, 5);
    REQUIRE(run(dir, {"priors", "build", "--embeddings", "emb.jsonl", "--latent-dim", "4"}).exit_code == 0);
    const auto store = json::parse(read_file(dir / "store.json"));
    std::vector<std::vector<double>> embs;
    for (const auto& e : store.at("entries")) embs.push_back(e.at("embedding").get<std::vector<double>>());
    std::mt19937_64 rng(6);
    for (int q = 0; q < 100; ++q) {
      const auto query = gaussian(rng, 10);
      const auto r = run(dir, {"priors", "select", "--store", "store.json", "--embedding", json(query).dump()});
      REQUIRE(r.exit_code == 0);
      CHECK(json::parse(r.out).at("index") == brute_force_argmax(embs, query));
    }
  }

  TEST_CASE("missing inputs fail") {
    TempDir dir;
    CHECK(run(dir, {"priors", "build", "--embeddings", "nope.jsonl"}).exit_code != 0);
    CHECK(run(dir, {"priors", "select", "--store", "nope.json", "--text", "x"}).exit_code != 0);
    CHECK(run(dir, {"priors", "attach", "--store", "nope.json", "--id", "a", "--latent", "[1]"}).exit_code != 0);
    CHECK(run(dir, {"priors", "sample", "--store", "nope.json", "--text", "x"}).exit_code != 0);
    CHECK(run(dir, {"benchmark", "--sigma-sweep", "--store", "nope.json"}).exit_code != 0);
  }
}

TEST_SUITE("serve") {
  struct Served {
    pid_t pid = -1;
    int port = 0;
    int out_fd = -1;
  };

  Served start_server(const TempDir& dir) {
    int pipefd[2];
    REQUIRE(pipe(pipefd) == 0);
    const pid_t pid = fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
      close(pipefd[0]);
      dup2(pipefd[1], 1);
      const int devnull = open("/dev/null", O_WRONLY);
      dup2(devnull, 2);
      const std::string data = (dir / "data").string();
      execl(LATENTRANK_CLI_PATH, LATENTRANK_CLI_PATH, "serve", "--port", "0", "--host", "127.0.0.1",
            "--data-dir", data.c_str(), nullptr);
      _exit(127);
    }
    close(pipefd[1]);
    std::string line;
    char ch;
    while (read(pipefd[0], &ch, 1) == 1 && ch != '\n') line += ch;
    Served s{pid, 0, pipefd[0]};
    const auto colon = line.rfind(':');
    REQUIRE_MESSAGE(colon != std::string::npos, line);
    s.port = std::stoi(line.substr(colon + 1));
    return s;
  }

  std::pair<int, std::string> stop_server(Served& s) {
    kill(s.pid, SIGTERM);
    int status = 0;
    waitpid(s.pid, &status, 0);
    std::string rest;
    char buf[256];
    for (ssize_t n; (n = read(s.out_fd, buf, sizeof buf)) > 0;) rest.append(buf, std::size_t(n));
    close(s.out_fd);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, rest};
  }

  TEST_CASE("serves an empty store list and stops on SIGTERM") {
    TempDir dir;
    auto s = start_server(dir);
    httplib::Client cli("127.0.0.1", s.port);
    auto res = cli.Get("/stores");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(json::parse(res->body) == json::array());
    const auto [code, rest] = stop_server(s);
    CHECK(code == 0);
    CHECK(rest.find("stopped") != std::string::npos);
  }

  TEST_CASE("a session interrupted by SIGTERM stays replayable") {
    TempDir dir;
    auto s = start_server(dir);
    httplib::Client cli("127.0.0.1", s.port);
    auto created = cli.Post("/sessions",
                            json{{"mode", "scripted"}, {"condition_text", "walk"}, {"config", {{"d", 4}, {"seed", 1}}}}.dump(),
                            "application/json");
    REQUIRE(created);
    REQUIRE(created->status == 201);
    const std::string id = json::parse(created->body).at("id");
    for (int r = 0; r < 3; ++r) {
      auto res = cli.Post("/sessions/" + id + "/feedback",
                          json{{"round", r}, {"kind", "full_ranking"}, {"ranking", {0, 1, 2, 3}}}.dump(),
                          "application/json");
      REQUIRE(res);
      REQUIRE(res->status == 200);
    }
    CHECK(stop_server(s).first == 0);
    const auto t = latentrank::read_transcript(dir / "data" / "sessions" / (id + ".jsonl"));
    CHECK(t.records.size() == 3);
    CHECK(latentrank::replay(t).tau == 3);
  }

  TEST_CASE("a busy port is an error") {
    TempDir dir;
    auto s = start_server(dir);
    const auto r = run(dir, {"serve", "--port", std::to_string(s.port), "--host", "127.0.0.1",
                             "--data-dir", (dir / "data2").string()});
    CHECK(r.exit_code != 0);
    stop_server(s);
  }
}
