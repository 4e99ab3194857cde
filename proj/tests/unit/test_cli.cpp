#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <json.hpp>
#include <string>

#include "awrkit/train.hpp"

using namespace awrkit;
namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "awrkit_test_cli";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int run(const std::string& args) {
    const std::string cmd = std::string("\"") + AWRKIT_CLI_PATH + "\" " + args + " > \"" +
                            (work_dir() / "stdout.txt").string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = bytes(e.path());
    return out;
}

const std::string kSmallModel = "--input-size 32 --dense-size 16 --channels 4,8,8 --head-kernel 1";

} // namespace

TEST_CASE("synth") {
    const fs::path a = work_dir() / "synth_a", b = work_dir() / "synth_b";
    CHECK(run("synth --frames 10 --seed 7 --out " + q(a)) == 0);
    CHECK(run("synth --frames 10 --seed 7 --out " + q(b)) == 0);
    const auto manifest = nlohmann::json::parse(bytes(a / "manifest.json"));
    CHECK(manifest.at("frames").size() == 10);
    CHECK(tree(a) == tree(b));
    CHECK(run("synth --frames 0 --seed 7 --out " + q(work_dir() / "synth_c")) == 1);
    CHECK(run("synth --frames 3 --dropout 2 --out " + q(work_dir() / "synth_d")) == 1);
}

TEST_CASE("gradcheck") {
    CHECK(run("gradcheck --trials 1 --seed 3") == 0);
    const std::string out = bytes(work_dir() / "stdout.txt");
    CHECK(out.find("awr_aggregate") != std::string::npos);
    CHECK(out.find("conv2d") != std::string::npos);
    CHECK(run("gradcheck --trials 2 --sabotage conv2d") == 3);
    CHECK(bytes(work_dir() / "stdout.txt").find("FAIL") != std::string::npos);
}

TEST_CASE("train and eval") {
    const fs::path data = work_dir() / "data";
    REQUIRE(run("synth --frames 12 --seed 2 --out " + q(data)) == 0);

    SUBCASE("zero epochs store the initialization") {
        const fs::path ckpt = work_dir() / "zero.ckpt";
        REQUIRE(run("train --rep H1 --epochs 0 --finetune-epochs 0 --seed 5 " + kSmallModel + " --data " + q(data) +
                    " --out " + q(ckpt)) == 0);
        const Checkpoint c = load_checkpoint(ckpt);
        const nn::Model init = nn::build_model(c.model.config(), 5);
        CHECK(c.epoch == 0);
        REQUIRE(c.model.parameters().size() == init.parameters().size());
        for (std::size_t i = 0; i < init.parameters().size(); ++i) {
            const auto& a = init.parameters()[i].value.storage();
            const auto& b = c.model.parameters()[i].value.storage();
            for (std::size_t k = 0; k < a.size(); ++k) CHECK(b[k] == static_cast<double>(static_cast<float>(a[k])));
        }
    }
    SUBCASE("usage and data errors") {
        CHECK(run("train --rep Q9 --epochs 0 --data " + q(data) + " --out " + q(work_dir() / "x.ckpt")) == 1);
        CHECK(run("train --mode sideways --epochs 0 --data " + q(data) + " --out " + q(work_dir() / "x.ckpt")) == 1);
        CHECK(run("train --epochs 1 --data " + q(work_dir() / "no_such_dir") + " --out " + q(work_dir() / "x.ckpt")) == 2);
        CHECK(run("eval --ckpt " + q(work_dir() / "missing.ckpt") + " --data " + q(data) + " --out " +
                  q(work_dir() / "r.json")) != 0);
        CHECK(run("eval --ckpt " + q(work_dir() / "missing.ckpt") + " --data " + q(data) + " --mode nearest --out " +
                  q(work_dir() / "r.json")) == 1);
    }
    SUBCASE("training and evaluation are byte-reproducible") {
        const fs::path c1 = work_dir() / "r1.ckpt", c2 = work_dir() / "r2.ckpt";
        const std::string args = "train --rep O2 --mode both --epochs 1 --finetune-epochs 1 --batch-size 4 --seed 3 " +
                                 kSmallModel + " --data " + q(data);
        REQUIRE(run(args + " --out " + q(c1)) == 0);
        REQUIRE(run(args + " --out " + q(c2)) == 0);
        CHECK(bytes(c1) == bytes(c2));
        CHECK(bytes(work_dir() / "r1.log.csv") == bytes(work_dir() / "r2.log.csv"));
        CHECK(bytes(work_dir() / "r1.log.csv").rfind("epoch,stage,dense_loss,joint_loss,val_mean_error_mm\n", 0) == 0);

        for (const char* mode : {"awr", "argmax"}) {
            const fs::path e1 = work_dir() / (std::string("e1_") + mode + ".json");
            const fs::path e2 = work_dir() / (std::string("e2_") + mode + ".json");
            REQUIRE(run("eval --ckpt " + q(c1) + " --data " + q(data) + " --mode " + mode + " --out " + q(e1)) == 0);
            REQUIRE(run("eval --ckpt " + q(c1) + " --data " + q(data) + " --mode " + mode + " --out " + q(e2)) == 0);
            CHECK(bytes(e1) == bytes(e2));
            const auto report = nlohmann::json::parse(bytes(e1));
            CHECK(report.at("n_frames") == 12);
            CHECK(report.contains("stratified"));
            CHECK(fs::exists(fs::path(e1).replace_extension(".curve.csv")));
            CHECK(fs::exists(fs::path(e1).replace_extension(".pred.csv")));
        }
    }
    SUBCASE("oracle maps decode within half a grid pitch") {
        const fs::path ckpt = work_dir() / "oracle.ckpt";
        REQUIRE(run("train --rep O3 --epochs 0 --finetune-epochs 0 " + kSmallModel + " --data " + q(data) + " --out " +
                    q(ckpt)) == 0);
        const fs::path rep = work_dir() / "oracle.json";
        REQUIRE(run("eval --ckpt " + q(ckpt) + " --data " + q(data) + " --oracle-maps --out " + q(rep)) == 0);
        CHECK(nlohmann::json::parse(bytes(rep)).at("all_joint_mean_mm").get<double>() < 250.0 / (2 * 16));
    }
}
