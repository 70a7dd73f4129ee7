#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#include "dynaseg/cli.hpp"
#include "dynaseg/io/image_io.hpp"
#include "dynaseg/io/mat5.hpp"
#include "support.hpp"

using namespace dynaseg;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("dynaseg");
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli_main(static_cast<int>(argv.size()), argv.data());
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::map<std::string, std::string> read_kv(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) lines.push_back(line);
    return lines;
}

// Two 8x12 stripe images with ground truth, written through the synth command.
fs::path make_corpus(const testsup::TempDir& tmp, const std::string& name) {
    const fs::path root = tmp.path() / name;
    REQUIRE(run_cli({"synth", "--out", root.string(), "--count", "2", "--blocks", "2",
                     "--height", "8", "--width", "12", "--noise", "0.01", "--seed", "9"}) == 0);
    return root;
}

const std::vector<std::string> kFastRun = {"--p", "6", "--q", "6", "--components", "1",
                                           "--iters", "3", "--threshold", "2"};

std::vector<std::string> with_fast(std::vector<std::string> args) {
    args.insert(args.end(), kFastRun.begin(), kFastRun.end());
    return args;
}

}  // namespace

TEST_CASE("the palette is stable and wraps label ids") {
    const PaletteSpec a = PaletteSpec::make();
    const PaletteSpec b = PaletteSpec::make();
    CHECK(a.colors == b.colors);
    CHECK(a.color_for(5) == a.color_for(5 + 256));
    CHECK(a.color_for(3) != a.color_for(4));
}

TEST_CASE("help and parse errors use the documented exit codes") {
    CHECK(run_cli({"--help"}) == 0);
    CHECK(run_cli({"frobnicate"}) == 2);
    CHECK(run_cli({"segment", "--schedule", "bogus"}) == 2);
    CHECK(run_cli({}) == 2);  // a subcommand is required
}

TEST_CASE("config and manifest errors exit with 2") {
    testsup::TempDir tmp("cli2");
    // no inputs at all
    CHECK(run_cli(with_fast({"segment", "--out", (tmp.path() / "a").string()})) == 2);
    // both input styles at once
    CHECK(run_cli(with_fast({"segment", "--image", testsup::data_file("tiny.jpg"),
                             "--dataset", "synthetic", "--root", "nowhere", "--out",
                             (tmp.path() / "b").string()})) == 2);
    // dataset without a root
    CHECK(run_cli(with_fast({"segment", "--dataset", "bsd500", "--out",
                             (tmp.path() / "c").string()})) == 2);
    // invalid hyperparameter caught by validation
    CHECK(run_cli({"segment", "--image", testsup::data_file("tiny.jpg"), "--momentum", "1.5",
                   "--out", (tmp.path() / "d").string()}) == 2);
}

TEST_CASE("synth writes a loadable corpus and is seed-deterministic") {
    testsup::TempDir tmp("synthcmd");
    const fs::path a = make_corpus(tmp, "a");
    const fs::path b = make_corpus(tmp, "b");
    for (const char* rel : {"images/synth-000.png", "images/synth-001.png",
                            "labels/synth-000.png", "labels/synth-001.png"}) {
        CHECK(fs::is_regular_file(a / rel));
        CHECK(read_bytes(a / rel) == read_bytes(b / rel));
    }
    const auto kv = read_kv(a / "effective_config.txt");
    CHECK(kv.at("command") == "synth");
    CHECK(kv.at("count") == "2");
    CHECK(kv.at("seed") == "9");
}

TEST_CASE("segment on a single image writes labels, overlay, and a log") {
    testsup::TempDir tmp("seg1");
    const fs::path out = tmp.path() / "out";
    REQUIRE(run_cli(with_fast({"segment", "--image", testsup::data_file("tiny.jpg"),
                               "--out", out.string(), "--seed", "4"})) == 0);

    const LabelMap labels = io::load_label_image((out / "tiny.labels.png").string());
    CHECK(labels.height == 6);
    CHECK(labels.width == 8);
    CHECK(labels.unique_count >= 1);
    CHECK(labels.unique_count <= 6);

    const ImageTensor overlay = io::load_image((out / "tiny.overlay.png").string());
    CHECK(overlay.height == 6);
    CHECK(overlay.width == 8);

    const auto lines = read_lines(out / "tiny.log.jsonl");
    REQUIRE(!lines.empty());
    const json done = json::parse(lines.back());
    CHECK(done.at("event") == "done");
    const int iters = done.at("iters").get<int>();
    CHECK(iters >= 1);
    CHECK(iters <= 3);
    CHECK(static_cast<int>(lines.size()) == iters + 1);
    CHECK(done.at("q_history").size() == static_cast<size_t>(iters));
    for (size_t i = 0; i + 1 < lines.size(); ++i) {
        const json it = json::parse(lines[i]);
        CHECK(it.at("iter") == static_cast<int>(i));
        CHECK(it.at("loss_total").get<double>() ==
              doctest::Approx(it.at("loss_sim").get<double>() +
                              it.at("mu").get<double>() * it.at("loss_con").get<double>()));
    }

    const auto kv = read_kv(out / "effective_config.txt");
    CHECK(kv.at("command") == "segment");
    CHECK(kv.at("schedule") == "fsf");
    CHECK(kv.at("alpha") == "15");  // fsf default
    CHECK(kv.at("stop_mode") == "fixed_k");
    CHECK(kv.at("threshold") == "2");
    CHECK(kv.at("resize") == "0");
    CHECK(kv.at("inputs") == "1");
}

TEST_CASE("segment reruns with the same seed are byte-identical") {
    testsup::TempDir tmp("seg2");
    const fs::path a = tmp.path() / "a";
    const fs::path b = tmp.path() / "b";
    for (const fs::path& out : {a, b})
        REQUIRE(run_cli(with_fast({"segment", "--image", testsup::data_file("tiny.jpg"),
                                   "--out", out.string(), "--seed", "11"})) == 0);
    CHECK(read_bytes(a / "tiny.labels.png") == read_bytes(b / "tiny.labels.png"));
    // wall_sec is the one legitimately run-dependent field in the log.
    const auto la = read_lines(a / "tiny.log.jsonl");
    const auto lb = read_lines(b / "tiny.log.jsonl");
    REQUIRE(la.size() == lb.size());
    for (size_t i = 0; i < la.size(); ++i) {
        json ja = json::parse(la[i]);
        json jb = json::parse(lb[i]);
        ja.erase("wall_sec");
        jb.erase("wall_sec");
        CHECK(ja == jb);
    }
}

TEST_CASE("fixed-schedule options land in the effective config") {
    testsup::TempDir tmp("seg3");
    const fs::path out = tmp.path() / "out";
    REQUIRE(run_cli(with_fast({"segment", "--image", testsup::data_file("tiny.jpg"),
                               "--schedule", "fixed", "--mu", "5", "--out",
                               out.string()})) == 0);
    const auto kv = read_kv(out / "effective_config.txt");
    CHECK(kv.at("schedule") == "fixed");
    CHECK(kv.at("mu") == "5");
}

TEST_CASE("command-line flags override config-file values") {
    testsup::TempDir tmp("cfg");
    const fs::path cfg = tmp.path() / "run.cfg";
    std::ofstream(cfg) << "alpha=30\niters=2\n";
    const fs::path out = tmp.path() / "out";
    REQUIRE(run_cli({"segment", "--config", cfg.string(), "--alpha", "7", "--image",
                     testsup::data_file("tiny.jpg"), "--out", out.string(), "--p", "6",
                     "--q", "6", "--components", "1", "--threshold", "2"}) == 0);
    const auto kv = read_kv(out / "effective_config.txt");
    CHECK(kv.at("alpha") == "7");   // flag beats file
    CHECK(kv.at("iters") == "2");   // file beats default
}

TEST_CASE("eval scores perfect synthetic predictions at 1.0") {
    testsup::TempDir tmp("eval1");
    const fs::path corpus = make_corpus(tmp, "corpus");
    const fs::path pred = tmp.path() / "pred";
    fs::create_directories(pred);
    for (const char* id : {"synth-000", "synth-001"})
        fs::copy_file(corpus / "labels" / (std::string(id) + ".png"),
                      pred / (std::string(id) + ".labels.png"));

    REQUIRE(run_cli({"eval", "--pred", pred.string(), "--dataset", "synthetic", "--root",
                     corpus.string()}) == 0);
    const json report = json::parse(read_bytes(pred / "eval" / "report.json"));
    CHECK(report.at("protocol") == "per_image");
    CHECK(report.at("n") == 2);
    CHECK(report.at("metrics").at("miou").get<double>() == doctest::Approx(1.0));
    CHECK(report.at("missing").empty());
    REQUIRE(report.at("per_image").size() == 2);
    CHECK(report.at("per_image")[0].at("id") == "synth-000");
}

TEST_CASE("missing predictions are reported and exit with 2") {
    testsup::TempDir tmp("eval2");
    const fs::path corpus = make_corpus(tmp, "corpus");
    const fs::path pred = tmp.path() / "pred";
    fs::create_directories(pred);
    fs::copy_file(corpus / "labels" / "synth-000.png", pred / "synth-000.labels.png");

    CHECK(run_cli({"eval", "--pred", pred.string(), "--dataset", "synthetic", "--root",
                   corpus.string()}) == 2);
    const json report = json::parse(read_bytes(pred / "eval" / "report.json"));
    REQUIRE(report.at("missing").size() == 1);
    CHECK(report.at("missing")[0] == "synth-001");
    CHECK(report.at("n") == 1);  // the present image still gets scored

    CHECK(run_cli({"eval", "--pred", pred.string()}) == 2);  // dataset is required
}

TEST_CASE("the annotated-photo protocol reports all four aggregates") {
    testsup::TempDir tmp("evalbsd");
    const fs::path root = tmp.path() / "bsd";
    const fs::path pred = tmp.path() / "pred";
    fs::create_directories(pred);
    const auto variants = io::read_bsd500_ground_truth(testsup::data_file("bsdlike.mat"));
    REQUIRE(variants.size() == 2);
    for (const char* id : {"70090", "70011"}) {
        ImageTensor img = testsup::random_image(4, 6, 21);
        fs::create_directories(root / "images" / "test");
        io::save_rgb_image((root / "images" / "test" / (std::string(id) + ".jpg")).string(),
                           4, 6, img.pixels);
        fs::create_directories(root / "groundTruth" / "test");
        fs::copy_file(testsup::data_file("bsdlike.mat"),
                      root / "groundTruth" / "test" / (std::string(id) + ".mat"));
        // predict the densest annotation exactly
        io::save_label_map((pred / (std::string(id) + ".labels.png")).string(), variants[0]);
    }

    REQUIRE(run_cli({"eval", "--pred", pred.string(), "--dataset", "bsd500", "--root",
                     root.string(), "--split", "test"}) == 0);
    const json report = json::parse(read_bytes(pred / "eval" / "report.json"));
    CHECK(report.at("protocol") == "bsd500");
    CHECK(report.at("n") == 2);
    const json& m = report.at("metrics");
    const double all = m.at("all").get<double>();
    const double fine = m.at("fine").get<double>();
    const double coarse = m.at("coarse").get<double>();
    const double mean = m.at("mean").get<double>();
    CHECK(fine == doctest::Approx(1.0));  // prediction equals the finest annotation
    CHECK(coarse < 1.0);                  // the 2-segment annotation cannot be matched exactly
    CHECK(all == doctest::Approx((fine + coarse) / 2));
    CHECK(mean == doctest::Approx((all + fine + coarse) / 3));
}

TEST_CASE("sweep appends one row per grid value and resumes by key") {
    testsup::TempDir tmp("sweep");
    const fs::path corpus = make_corpus(tmp, "corpus");
    const fs::path out = tmp.path() / "out";
    const std::vector<std::string> base = with_fast(
        {"sweep", "--dataset", "synthetic", "--root", corpus.string(), "--out", out.string(),
         "--seed", "3"});

    auto with_values = [&](std::initializer_list<const char*> vals) {
        std::vector<std::string> args = base;
        args.push_back("--values");
        for (const char* v : vals) args.push_back(v);
        return args;
    };

    REQUIRE(run_cli(with_values({"10", "20"})) == 0);
    auto lines = read_lines(out / "sweep.csv");
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] ==
          "schedule,value,images,failed,miou,mean_final_q,mean_final_loss,wall_sec");
    CHECK(lines[1].rfind("fsf,10,2,0,", 0) == 0);
    CHECK(lines[2].rfind("fsf,20,2,0,", 0) == 0);

    // rerun with a superset of the grid: finished rows stay, one is added
    REQUIRE(run_cli(with_values({"10", "20", "30"})) == 0);
    lines = read_lines(out / "sweep.csv");
    REQUIRE(lines.size() == 4);
    CHECK(lines[3].rfind("fsf,30,2,0,", 0) == 0);

    // the scored miou column is a number in [0, 1]
    std::istringstream row(lines[1]);
    std::string field;
    for (int i = 0; i < 5; ++i) std::getline(row, field, ',');
    const double miou_val = std::stod(field);
    CHECK(miou_val >= 0.0);
    CHECK(miou_val <= 1.0);

    CHECK(run_cli(with_fast({"sweep", "--dataset", "synthetic", "--root", corpus.string(),
                             "--out", (tmp.path() / "o2").string()})) == 2);  // --values required
}

TEST_CASE("segment consumes a dataset root and eval closes the loop") {
    testsup::TempDir tmp("loop");
    const fs::path corpus = make_corpus(tmp, "corpus");
    const fs::path out = tmp.path() / "out";
    REQUIRE(run_cli(with_fast({"segment", "--dataset", "synthetic", "--root", corpus.string(),
                               "--out", out.string(), "--seed", "7", "--limit", "1"})) == 0);
    CHECK(fs::is_regular_file(out / "synth-000.labels.png"));
    CHECK_FALSE(fs::exists(out / "synth-001.labels.png"));  // --limit respected

    REQUIRE(run_cli({"eval", "--pred", out.string(), "--dataset", "synthetic", "--root",
                     corpus.string(), "--limit", "1"}) == 0);
    const json report = json::parse(read_bytes(out / "eval" / "report.json"));
    CHECK(report.at("n") == 1);
    const double miou_val = report.at("metrics").at("miou").get<double>();
    CHECK(miou_val >= 0.0);
    CHECK(miou_val <= 1.0);
}
