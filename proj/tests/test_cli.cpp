// End-to-end checks of the command-line surface: exit codes, help, config
// precedence, and the artifact files each subcommand leaves behind.

#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "posbias/corpus.hpp"
#include "synthetic.hpp"

namespace fs = std::filesystem;
using namespace posbias;

#ifndef POSBIAS_CLI_EXE
#define POSBIAS_CLI_EXE "posbias"
#endif

namespace {

struct Fixture {
  fs::path dir;

  Fixture() {
    static int counter = 0;
    dir = fs::temp_directory_path() /
          ("posbias_cli_" + std::to_string(::getpid()) + "_" +
           std::to_string(counter++));
    fs::create_directories(dir);
    write("lap_train.xml", testsupport::to_semeval_xml(
                               testsupport::synthetic_dataset(40, 1)));
    write("rest_test.xml",
          testsupport::to_semeval_xml(testsupport::synthetic_dataset(
              12, 2, corpus::Domain::Restaurant, corpus::Split::Test)));
    write("arts_lap.json", testsupport::to_arts_json(
                               testsupport::synthetic_dataset(10, 3)));
    write("glove.txt", testsupport::synthetic_embeddings_text(8, 4));
  }

  ~Fixture() { fs::remove_all(dir); }

  void write(const std::string& name, const std::string& content) const {
    std::ofstream out((dir / name).string());
    out << content;
  }

  std::string path(const std::string& name) const {
    return (dir / name).string();
  }

  int run(const std::string& args) const {
    const std::string cmd = std::string("\"") + POSBIAS_CLI_EXE + "\" " + args +
                            " >" + path("stdout.txt") + " 2>" +
                            path("stderr.txt");
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string stream(const char* which) const {
    std::ifstream in(path(which));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
};

}  // namespace

TEST_CASE("help exits zero on the root command and every subcommand") {
  Fixture fx;
  CHECK(fx.run("--help") == 0);
  for (const char* sub : {"ingest", "split", "train", "eval", "robustness",
                          "proximity", "explain"}) {
    CHECK(fx.run(std::string(sub) + " --help") == 0);
    const std::string text = fx.stream("stdout.txt");
    CHECK(text.find("--help") != std::string::npos);
  }
  CHECK(fx.run("--version") == 0);
}

TEST_CASE("usage errors exit with code 1") {
  Fixture fx;
  CHECK(fx.run("ingest --no-such-flag") == 1);
  CHECK(fx.run("definitely-not-a-subcommand") == 1);
  CHECK(fx.run("") == 1);  // a subcommand is required
}

TEST_CASE("data errors exit with code 2") {
  Fixture fx;
  CHECK(fx.run("ingest --format semeval --in " + fx.path("absent.xml")) == 2);
  fx.write("broken.xml", "<sentences><sentence>");
  CHECK(fx.run("ingest --format semeval --in " + fx.path("broken.xml")) == 2);
  fx.write("broken.json", "this is not json");
  CHECK(fx.run("ingest --format arts --in " + fx.path("broken.json")) == 2);
}

TEST_CASE("ingest prints label counts and writes a dump plus manifest") {
  Fixture fx;
  const int rc = fx.run("ingest --format semeval --in " + fx.path("lap_train.xml") +
                        " --domain laptop --split train --out " +
                        fx.path("dump.jsonl") + " --stats");
  REQUIRE(rc == 0);
  const std::string out = fx.stream("stdout.txt");
  CHECK(out.find("domain=laptop") != std::string::npos);
  CHECK(out.find("instances=40") != std::string::npos);

  const corpus::Dataset ds =
      corpus::load_jsonl_file(fx.path("dump.jsonl"), corpus::Split::Train);
  CHECK(ds.size() == 40);

  const auto manifest =
      nlohmann::json::parse(std::ifstream(fx.path("dump.jsonl.manifest.json")));
  CHECK(manifest.at("command") == "ingest");
  CHECK(manifest.at("inputs").size() == 1);
  CHECK(manifest.at("inputs")[0].at("sha256").get<std::string>().size() == 64);
}

TEST_CASE("split partitions the dump deterministically") {
  Fixture fx;
  REQUIRE(fx.run("ingest --format semeval --in " + fx.path("lap_train.xml") +
                 " --domain laptop --out " + fx.path("dump.jsonl")) == 0);
  REQUIRE(fx.run("split --in " + fx.path("dump.jsonl") +
                 " --k 8 --seed 3 --out-train " + fx.path("tr.jsonl") +
                 " --out-dev " + fx.path("dev.jsonl")) == 0);
  const auto tr = corpus::load_jsonl_file(fx.path("tr.jsonl"), corpus::Split::Train);
  const auto dev = corpus::load_jsonl_file(fx.path("dev.jsonl"), corpus::Split::Dev);
  CHECK(tr.size() == 32);
  CHECK(dev.size() == 8);

  REQUIRE(fx.run("split --in " + fx.path("dump.jsonl") +
                 " --k 8 --seed 3 --out-train " + fx.path("tr2.jsonl") +
                 " --out-dev " + fx.path("dev2.jsonl")) == 0);
  std::ifstream a(fx.path("dev.jsonl")), b(fx.path("dev2.jsonl"));
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());
}

TEST_CASE("train, eval and explain round trip through a checkpoint") {
  Fixture fx;
  REQUIRE(fx.run("ingest --format semeval --in " + fx.path("lap_train.xml") +
                 " --domain laptop --out " + fx.path("dump.jsonl")) == 0);
  REQUIRE(fx.run("split --in " + fx.path("dump.jsonl") +
                 " --k 8 --seed 0 --out-train " + fx.path("tr.jsonl") +
                 " --out-dev " + fx.path("dev.jsonl")) == 0);
  REQUIRE(fx.run("train --arch memnet --mode pos-dp --hidden 6 --embed-dim 8 "
                 "--hops 2 --batch 4 --lr 0.02 --epochs 3 --seed 1 --train " +
                 fx.path("tr.jsonl") + " --dev " + fx.path("dev.jsonl") +
                 " --embeddings " + fx.path("glove.txt") + " --out-dir " +
                 fx.path("run")) == 0);
  CHECK(fs::exists(fx.path("run/checkpoint.bin")));
  CHECK(fs::exists(fx.path("run/checkpoint.bin.meta.json")));
  CHECK(fs::exists(fx.path("run/trainlog.jsonl")));
  CHECK(fs::exists(fx.path("run/manifest.json")));

  REQUIRE(fx.run("eval --checkpoint " + fx.path("run/checkpoint.bin") +
                 " --test " + fx.path("rest_test.xml") +
                 " --domain restaurant --embeddings " + fx.path("glove.txt") +
                 " --out-csv " + fx.path("eval.csv")) == 0);
  CHECK(fx.stream("stdout.txt").find("accuracy=") != std::string::npos);
  std::ifstream csv(fx.path("eval.csv"));
  std::string header;
  std::getline(csv, header);
  CHECK(header == "id,gold,predicted");

  REQUIRE(fx.run("explain --checkpoint " + fx.path("run/checkpoint.bin") +
                 " --in " + fx.path("rest_test.xml") +
                 " --domain restaurant --index 0 --what attention --record "
                 "hop2 --embeddings " + fx.path("glove.txt") + " --out " +
                 fx.path("map.svg")) == 0);
  CHECK(fs::exists(fx.path("map.svg")));

  // unknown attention record is a data error
  CHECK(fx.run("explain --checkpoint " + fx.path("run/checkpoint.bin") +
               " --in " + fx.path("rest_test.xml") +
               " --domain restaurant --index 0 --what attention --record "
               "hop9 --embeddings " + fx.path("glove.txt") + " --out " +
               fx.path("map2.svg")) == 2);
}

TEST_CASE("proximity writes the kde csv over multiple series") {
  Fixture fx;
  std::ostringstream tsv;
  tsv << "sentence_id\tn\taspect_start\taspect_end\topinion_start\topinion_end\n";
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const int n = 8 + static_cast<int>(rng.below(8));
    const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(n - 2)));
    const int o = static_cast<int>(rng.below(static_cast<std::uint64_t>(n - 1)));
    tsv << "s" << i << '\t' << n << '\t' << a << '\t' << a + 1 << '\t' << o
        << '\t' << o + 1 << '\n';
  }
  fx.write("pairs_a.tsv", tsv.str());
  fx.write("pairs_b.tsv", tsv.str());

  REQUIRE(fx.run("proximity --in " + fx.path("pairs_a.tsv") + " --in " +
                 fx.path("pairs_b.tsv") + " --out-csv " + fx.path("kde.csv") +
                 " --out-svg " + fx.path("kde.svg")) == 0);
  std::ifstream csv(fx.path("kde.csv"));
  std::string header;
  std::getline(csv, header);
  CHECK(header == "series,x,density");
  CHECK(fs::exists(fx.path("kde.svg")));

  // single input: two-column layout
  REQUIRE(fx.run("proximity --in " + fx.path("pairs_a.tsv") + " --out-csv " +
                 fx.path("kde1.csv")) == 0);
  std::ifstream csv1(fx.path("kde1.csv"));
  std::getline(csv1, header);
  CHECK(header == "x,density");
}

TEST_CASE("config file values are overridden by command-line flags") {
  Fixture fx;
  REQUIRE(fx.run("ingest --format semeval --in " + fx.path("lap_train.xml") +
                 " --domain laptop --out " + fx.path("dump.jsonl")) == 0);
  REQUIRE(fx.run("split --in " + fx.path("dump.jsonl") +
                 " --k 8 --seed 0 --out-train " + fx.path("tr.jsonl") +
                 " --out-dev " + fx.path("dev.jsonl")) == 0);
  std::ostringstream ini;
  ini << "[train]\narch=lstm\nhidden=6\nembed-dim=8\nbatch=4\nlr=0.02\n"
      << "epochs=4\ntrain=" << fx.path("tr.jsonl") << "\ndev="
      << fx.path("dev.jsonl") << "\nembeddings=" << fx.path("glove.txt")
      << "\nout-dir=" << fx.path("cfg_run") << '\n';
  fx.write("conf.ini", ini.str());

  REQUIRE(fx.run("--config " + fx.path("conf.ini") + " train --epochs 1") == 0);
  const auto manifest =
      nlohmann::json::parse(std::ifstream(fx.path("cfg_run/manifest.json")));
  CHECK(manifest.at("config").at("max_epochs").get<int>() == 1);  // flag wins

  std::ifstream log(fx.path("cfg_run/trainlog.jsonl"));
  std::size_t lines = 0;
  std::string line;
  while (std::getline(log, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 1);
}
