#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "spantagger/cli.hpp"
#include "toy_corpus.hpp"

using namespace spantagger;
namespace fs = std::filesystem;

namespace {

// Unique scratch directory per test case, removed on destruction.
struct TmpDir {
  fs::path dir;
  TmpDir() {
    static int counter = 0;
    dir = fs::temp_directory_path() /
          ("spantagger-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::create_directories(dir);
  }
  ~TmpDir() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

struct RunResult {
  int code = 0;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string write_toy_corpus(const TmpDir& tmp, const std::string& name, std::size_t count) {
  std::vector<Sentence> corpus = toy::corpus();
  if (count < corpus.size()) corpus.resize(count);
  const std::string path = tmp.path(name);
  std::ofstream out(path);
  write_corpus_stream(out, corpus);
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small-model flag set shared by the train/gradcheck invocations.
std::vector<std::string> tiny_flags() {
  return {"--hidden", "8",  "--headsK", "2", "--headsM", "2", "--tokenDim", "4",
          "--posDim", "2",  "--relDim", "6", "--layers", "2", "--dropout", "0",
          "--epochs", "2"};
}

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("validate accepts the sample corpus") {
  TmpDir tmp;
  const std::string data = write_toy_corpus(tmp, "corpus.tsv", 20);
  RunResult r = run_cli({"validate", "--data", data});
  CHECK(r.code == 0);
  CHECK(r.out.find("ok: 20 sentences") != std::string::npos);
  CHECK(r.err.empty());
}

TEST_CASE("validate lists ill-formed gold sequences and exits 2") {
  TmpDir tmp;
  const std::string data = tmp.path("bad.tsv");
  {
    // Structurally valid, but the opinion column opens a B span and never
    // closes it, so the sequence is ill-formed.
    std::ofstream out(data);
    out << "# id = dangling\n"
        << "good\tJJ\t2\tamod\tO\tB\n"
        << "food\tNN\tROOT\troot\tS-POS\tO\n";
  }
  RunResult r = run_cli({"validate", "--data", data});
  CHECK(r.code == 2);
  CHECK(r.out.find("sentence 'dangling': ill-formed opinion tag sequence") != std::string::npos);
  CHECK(r.err.find("error kind=data msg=1 ill-formed tag sequences") != std::string::npos);
}

TEST_CASE("validate reports unreadable and malformed files as data errors") {
  TmpDir tmp;
  RunResult missing = run_cli({"validate", "--data", tmp.path("nope.tsv")});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("error kind=data") != std::string::npos);

  const std::string data = tmp.path("cols.tsv");
  {
    std::ofstream out(data);
    out << "# id = short\nfood\tNN\tROOT\troot\tO\n";  // five columns
  }
  RunResult malformed = run_cli({"validate", "--data", data});
  CHECK(malformed.code == 2);
  CHECK(malformed.err.find("6 tab-separated columns") != std::string::npos);
}

TEST_CASE("usage errors exit 1 with a machine line") {
  RunResult unknown = run_cli({"validate", "--data", "x", "--bogus"});
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("error kind=usage") != std::string::npos);

  RunResult none = run_cli({});
  CHECK(none.code == 1);

  RunResult help = run_cli({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("train") != std::string::npos);
  CHECK(help.out.find("gradcheck") != std::string::npos);
}

TEST_CASE("config validation failures name the offending key") {
  TmpDir tmp;
  const std::string data = write_toy_corpus(tmp, "corpus.tsv", 4);
  RunResult r = run_cli(cat({"train", "--train", data, "--out", tmp.path("m.ckpt"),
                             "--dropout", "1.2"},
                            {}));
  CHECK(r.code == 1);
  CHECK(r.err.find("error kind=usage") != std::string::npos);
  CHECK(r.err.find("dropout") != std::string::npos);

  RunResult odd = run_cli({"train", "--train", data, "--out", tmp.path("m.ckpt"), "--hidden",
                           "9", "--headsK", "2", "--headsM", "2"});
  CHECK(odd.code == 1);
  CHECK(odd.err.find("divisible by headsK") != std::string::npos);
}

TEST_CASE("unknown config file keys are rejected") {
  TmpDir tmp;
  const std::string cfgPath = tmp.path("bad.cfg");
  {
    std::ofstream out(cfgPath);
    out << "hidden = 8\nwidgets = 3\n";
  }
  const std::string data = write_toy_corpus(tmp, "corpus.tsv", 4);
  RunResult r = run_cli({"train", "--config", cfgPath, "--train", data, "--out",
                         tmp.path("m.ckpt")});
  CHECK(r.code == 1);
  CHECK(r.err.find("unknown config key 'widgets'") != std::string::npos);
}

TEST_CASE("train, eval, and predict round-trip through checkpoints") {
  TmpDir tmp;
  const std::string data = write_toy_corpus(tmp, "corpus.tsv", 6);
  const std::string ckpt = tmp.path("model.ckpt");

  RunResult tr = run_cli(cat({"train", "--train", data, "--out", ckpt}, tiny_flags()));
  CAPTURE(tr.err);
  REQUIRE(tr.code == 0);
  CHECK(tr.out.find("checkpoint: " + ckpt) != std::string::npos);
  CHECK(fs::exists(ckpt));
  CHECK(!fs::exists(ckpt + ".tmp"));

  // Metrics sidecar defaults to <out>.metrics with one line per epoch.
  const std::string metrics = slurp(ckpt + ".metrics");
  CHECK(metrics.find("epoch=1 loss=") != std::string::npos);
  CHECK(metrics.find("epoch=2 loss=") != std::string::npos);

  RunResult ev = run_cli({"eval", "--model", ckpt, "--data", data});
  CAPTURE(ev.err);
  REQUIRE(ev.code == 0);
  CHECK(ev.out.find("aspect extraction") != std::string::npos);
  CHECK(ev.out.find("task=aspect P=") != std::string::npos);

  const std::string pred = tmp.path("pred.tsv");
  RunResult pr = run_cli({"predict", "--model", ckpt, "--data", data, "--out", pred});
  CAPTURE(pr.err);
  REQUIRE(pr.code == 0);
  CHECK(pr.out.find("predicted 6 sentences") != std::string::npos);
  CHECK(!fs::exists(pred + ".tmp"));

  // The tagged file reads back: aspect column replaced, opinion intact.
  const std::vector<Sentence> before = read_corpus(data, TaskKind::Opinion);
  const std::vector<Sentence> after = read_corpus(pred, TaskKind::Opinion);
  REQUIRE(after.size() == before.size());
  for (std::size_t i = 0; i < after.size(); ++i)
    for (int t = 0; t < after[i].size(); ++t)
      CHECK(after[i].tokens[t].opinionTag == before[i].tokens[t].opinionTag);
  read_corpus(pred, TaskKind::Aspect);  // predictions parse as valid tags
}

TEST_CASE("seed resolution: flag beats config beats environment") {
  TmpDir tmp;
  const std::string data = write_toy_corpus(tmp, "corpus.tsv", 4);
  auto train_to = [&](const std::string& name, const std::vector<std::string>& extra) {
    const std::string ckpt = tmp.path(name);
    RunResult r = run_cli(cat(cat({"train", "--train", data, "--out", ckpt}, tiny_flags()),
                              extra));
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    return slurp(ckpt);
  };

  ::setenv("SPANTAGGER_SEED", "123", 1);
  const std::string viaEnv = train_to("env.ckpt", {});
  ::unsetenv("SPANTAGGER_SEED");
  const std::string viaFlag = train_to("flag.ckpt", {"--seed", "123"});
  const std::string other = train_to("other.ckpt", {"--seed", "124"});
  CHECK(viaEnv == viaFlag);  // same seed, byte-identical checkpoint
  CHECK(viaEnv != other);

  ::setenv("SPANTAGGER_SEED", "99", 1);
  const std::string flagWins = train_to("flagwins.ckpt", {"--seed", "123"});
  ::unsetenv("SPANTAGGER_SEED");
  CHECK(flagWins == viaFlag);

  ::setenv("SPANTAGGER_SEED", "not-a-number", 1);
  RunResult bad = run_cli(cat({"train", "--train", data, "--out", tmp.path("x.ckpt")},
                              tiny_flags()));
  ::unsetenv("SPANTAGGER_SEED");
  CHECK(bad.code == 1);
  CHECK(bad.err.find("SPANTAGGER_SEED") != std::string::npos);
}

TEST_CASE("command line flags override the config file") {
  TmpDir tmp;
  const std::string data = write_toy_corpus(tmp, "corpus.tsv", 4);
  const std::string cfgPath = tmp.path("train.cfg");
  {
    std::ofstream out(cfgPath);
    out << "hidden = 8\nheadsK = 2\nheadsM = 2\ntokenDim = 4\nposDim = 2\n"
        << "relDim = 6\ndropout = 0\nepochs = 1\n";
  }
  const std::string ckpt = tmp.path("m.ckpt");
  RunResult r = run_cli({"train", "--config", cfgPath, "--train", data, "--out", ckpt,
                         "--epochs", "3"});
  CAPTURE(r.err);
  REQUIRE(r.code == 0);
  const std::string metrics = slurp(ckpt + ".metrics");
  CHECK(metrics.find("epoch=3 ") != std::string::npos);  // flag value won
  const std::string ckptText = slurp(ckpt);
  CHECK(ckptText.find("epochs = 3") != std::string::npos);
  CHECK(ckptText.find("hidden = 8") != std::string::npos);  // file value kept
}

TEST_CASE("gradcheck passes on the builtin sentence and on corpus input") {
  TmpDir tmp;
  RunResult builtin = run_cli(cat({"gradcheck"}, tiny_flags()));
  CAPTURE(builtin.err);
  CHECK(builtin.code == 0);
  CHECK(builtin.out.find("gradcheck rgat: max relative error") != std::string::npos);

  const std::string data = write_toy_corpus(tmp, "corpus.tsv", 20);
  RunResult fromData =
      run_cli(cat({"gradcheck", "--data", data, "--variant", "rgat-crf"}, tiny_flags()));
  CAPTURE(fromData.err);
  CHECK(fromData.code == 0);
  CHECK(fromData.out.find("gradcheck rgat-crf") != std::string::npos);
}

TEST_CASE("sidecar encoder demands a sidecar file") {
  TmpDir tmp;
  const std::string data = write_toy_corpus(tmp, "corpus.tsv", 4);
  RunResult r = run_cli(cat({"train", "--train", data, "--out", tmp.path("m.ckpt"),
                             "--encoderSource", "sidecar"},
                            tiny_flags()));
  CHECK(r.code == 1);
  CHECK(r.err.find("requires --sidecar") != std::string::npos);
}

TEST_CASE("data errors from deep in the pipeline surface with exit 2") {
  TmpDir tmp;
  const std::string data = write_toy_corpus(tmp, "corpus.tsv", 4);
  const std::string ckpt = tmp.path("m.ckpt");
  RunResult tr = run_cli(cat({"train", "--train", data, "--out", ckpt}, tiny_flags()));
  REQUIRE(tr.code == 0);

  // Predict into a directory that does not exist: atomic write fails.
  RunResult pr = run_cli({"predict", "--model", ckpt, "--data", data, "--out",
                          tmp.path("no-such-dir/pred.tsv")});
  CHECK(pr.code == 2);
  CHECK(pr.err.find("error kind=data") != std::string::npos);

  // Evaluating a corpus whose aspect column is all "_" is a data error.
  const std::string hollow = tmp.path("hollow.tsv");
  {
    std::vector<Sentence> corpus = toy::corpus();
    corpus.resize(2);
    for (Sentence& s : corpus)
      for (Token& t : s.tokens) t.aspectTag = "_";
    std::ofstream out(hollow);
    write_corpus_stream(out, corpus);
  }
  RunResult ev = run_cli({"eval", "--model", ckpt, "--data", hollow});
  CHECK(ev.code == 2);
  CHECK(ev.err.find("error kind=data") != std::string::npos);

  // A checkpoint path that is not a checkpoint.
  RunResult badModel = run_cli({"eval", "--model", data, "--data", data});
  CHECK(badModel.code == 2);
  CHECK(badModel.err.find("not a spantagger-ckpt") != std::string::npos);
}

TEST_CASE("eval seed override is accepted and deterministic") {
  TmpDir tmp;
  const std::string data = write_toy_corpus(tmp, "corpus.tsv", 5);
  const std::string ckpt = tmp.path("m.ckpt");
  REQUIRE(run_cli(cat({"train", "--train", data, "--out", ckpt}, tiny_flags())).code == 0);
  RunResult a = run_cli({"eval", "--model", ckpt, "--data", data, "--seed", "5"});
  RunResult b = run_cli({"eval", "--model", ckpt, "--data", data, "--seed", "5"});
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
}
