#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lf/tensor.hpp"

namespace fs = std::filesystem;

namespace {

struct temp_dir {
    fs::path path;
    temp_dir(const std::string& tag) : path(fs::temp_directory_path() / ("lfqa_cli_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~temp_dir() { fs::remove_all(path); }
};

int run_cli(const std::string& args) {
    const std::string cmd = std::string(LFQA_BIN) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

}  // namespace

TEST_CASE("cli: unknown commands and bad flags exit with the usage code") {
    CHECK(run_cli("frobnicate") == 2);
    CHECK(run_cli("synth --no-such-flag") == 2);
    CHECK(run_cli("--help") == 0);
}

TEST_CASE("cli: synth is byte-reproducible for a fixed seed") {
    temp_dir dir("synth");
    const std::string out1 = (dir.path / "a").string(), out2 = (dir.path / "b").string();
    REQUIRE(run_cli("--seed 9 synth --count 4 --out " + out1) == 0);
    REQUIRE(run_cli("--seed 9 synth --count 4 --out " + out2) == 0);
    CHECK(slurp(fs::path(out1) / "labels.csv") == slurp(fs::path(out2) / "labels.csv"));
    CHECK(slurp(fs::path(out1) / "lfi_0000.lft") == slurp(fs::path(out2) / "lfi_0000.lft"));
    CHECK(slurp(fs::path(out1) / "lfi_0003.lft") == slurp(fs::path(out2) / "lfi_0003.lft"));

    const std::string out3 = (dir.path / "c").string();
    REQUIRE(run_cli("--seed 10 synth --count 4 --out " + out3) == 0);
    CHECK(slurp(fs::path(out1) / "lfi_0000.lft") != slurp(fs::path(out3) / "lfi_0000.lft"));
}

TEST_CASE("cli: augment writes exactly eight variants") {
    temp_dir dir("augment");
    const std::string data = (dir.path / "d").string();
    REQUIRE(run_cli("--seed 3 synth --count 4 --out " + data) == 0);
    const std::string out = (dir.path / "aug").string();
    REQUIRE(run_cli("augment --in " + data + "/lfi_0000.lft --out " + out) == 0);
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& entry : fs::directory_iterator(out)) ++files;
    CHECK(files == 8);
    const lf::tensor original = lf::read_lft(data + "/lfi_0000.lft");
    const lf::tensor first = lf::read_lft(out + "/aug0.lft");
    CHECK(first.data() == original.data());
}

TEST_CASE("cli: features emits one spatial and one angular row per input") {
    temp_dir dir("features");
    const std::string data = (dir.path / "d").string();
    REQUIRE(run_cli("--seed 4 synth --count 4 --out " + data) == 0);
    const std::string out = (dir.path / "features.csv").string();
    REQUIRE(run_cli("features --in " + data + "/lfi_0000.lft --in " + data + "/lfi_0001.lft --out " + out) ==
            0);
    const std::string text = slurp(out);
    CHECK(count_lines(text) == 4);
    CHECK(text.find(",spatial,") != std::string::npos);
    CHECK(text.find(",angular,") != std::string::npos);

    // spatial rows carry 36 values, angular rows 8
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const std::size_t commas = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
        if (line.find(",spatial,") != std::string::npos) CHECK(commas == 37);
        if (line.find(",angular,") != std::string::npos) CHECK(commas == 9);
    }
}

TEST_CASE("cli: tiny cost report is reproducible and internally consistent") {
    temp_dir dir("cost");
    const std::string out1 = (dir.path / "c1.csv").string(), out2 = (dir.path / "c2.csv").string();
    REQUIRE(run_cli("--scale tiny cost-report --out " + out1) == 0);
    REQUIRE(run_cli("--scale tiny cost-report --out " + out2) == 0);
    const std::string text = slurp(out1);
    CHECK(text == slurp(out2));
    CHECK(text.rfind("layer_index,kind,analytic_macs,measured_macs,params\n", 0) == 0);

    // analytic == measured on every layer row
    std::istringstream is(text);
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        REQUIRE(cells.size() == 5);
        CHECK(cells[2] == cells[3]);
    }
}

TEST_CASE("cli: gradcheck passes at the documented tolerance") {
    CHECK(run_cli("--seed 7 gradcheck --ops all --rounds 2") == 0);
}

TEST_CASE("cli: train, eval and predict round trip on a micro dataset") {
    temp_dir dir("train");
    const std::string data = (dir.path / "d").string();
    REQUIRE(run_cli("--seed 5 synth --count 6 --out " + data) == 0);
    const std::string run = (dir.path / "run").string();
    REQUIRE(run_cli("--seed 5 train --data " + data + "/labels.csv --batches 3 --out " + run) == 0);
    CHECK(fs::exists(fs::path(run) / "model.alas"));
    CHECK(fs::exists(fs::path(run) / "history.csv"));

    const std::string history = slurp(fs::path(run) / "history.csv");
    CHECK(history.rfind("batch,epoch,replica,train_loss,val_loss\n", 0) == 0);
    CHECK(count_lines(history) >= 4);

    const std::string metrics = (dir.path / "metrics.csv").string();
    REQUIRE(run_cli("eval --data " + data + "/labels.csv --model " + run + "/model.alas --out " + metrics) ==
            0);
    const std::string mtext = slurp(metrics);
    CHECK(mtext.rfind("rmse,srocc,plcc\n", 0) == 0);
    CHECK(count_lines(mtext) == 2);

    const std::string pred = (dir.path / "pred.csv").string();
    REQUIRE(run_cli("predict --in " + data + "/lfi_0000.lft --model " + run + "/model.alas --out " + pred) ==
            0);
    const std::string ptext = slurp(pred);
    CHECK(ptext.rfind("score,", 0) == 0);
    CHECK(ptext.find("spatial,") != std::string::npos);
    CHECK(ptext.find("angular,") != std::string::npos);

    // determinism across repeat runs
    const std::string run2 = (dir.path / "run2").string();
    REQUIRE(run_cli("--seed 5 train --data " + data + "/labels.csv --batches 3 --out " + run2) == 0);
    CHECK(slurp(fs::path(run) / "model.alas") == slurp(fs::path(run2) / "model.alas"));
    CHECK(slurp(fs::path(run) / "history.csv") == slurp(fs::path(run2) / "history.csv"));
}
