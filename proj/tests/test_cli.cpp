// End-to-end coverage of the command-line tool: every subcommand, the
// key=value config files, and the exit-code contract.
#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "harmonize/harmonize.hpp"

#include "helpers.hpp"

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) out.push_back(line);
    return out;
}

struct CmdResult {
    int code = -1;
    std::string output;  // stdout and stderr combined

    bool contains(const std::string& needle) const {
        return output.find(needle) != std::string::npos;
    }
};

CmdResult run_tool(const std::string& args) {
    static int counter = 0;
    const fs::path capture =
        fs::temp_directory_path() / ("harmonize_cli_capture_" + std::to_string(counter++) + ".txt");
    const std::string cmd =
        std::string(HARMONIZE_TOOL_PATH) + " " + args + " > " + capture.string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    CmdResult r;
    r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.output = read_file(capture);
    fs::remove(capture);
    return r;
}

// One synthetic dataset plus a short training run, built once and shared by
// every case in this binary.
struct Fixture {
    fs::path dir, dataset, ckpt, log;
};

const Fixture& fixture() {
    static const Fixture fx = [] {
        Fixture f;
        f.dir = test_util::scratch_dir("cli");
        f.dataset = f.dir / "data";
        f.ckpt = f.dir / "model.ckpt";
        f.log = f.dir / "loss.csv";

        CmdResult synth = run_tool("synth-data --out " + f.dataset.string() +
                                   " --seed 9 --train 6 --test 4 --resolution 32");
        REQUIRE(synth.code == 0);
        REQUIRE(synth.contains("wrote 6 train + 4 test triplets"));

        CmdResult train = run_tool(
            "train --dataset " + f.dataset.string() + " --checkpoint " + f.ckpt.string() +
            " --log " + f.log.string() +
            " --resolution 32 --code-dim 4 --epochs 2 --batch-size 2 --gen-base-width 8 --seed 11");
        REQUIRE(train.code == 0);
        REQUIRE(train.contains("training on 6 triplets at 32x32 from epoch 0 to 2"));
        REQUIRE(train.contains("finished at step 6"));
        return f;
    }();
    return fx;
}

std::string test_id(std::size_t i) {
    return harmonize::detail::read_split_ids(fixture().dataset.string(), "test").at(i);
}

}  // namespace

TEST_CASE("synth-data lays out the dataset tree the loaders expect") {
    const Fixture& f = fixture();
    for (const char* sub : {"composite_images", "real_images", "masks"})
        REQUIRE(fs::is_directory(f.dataset / sub));
    const auto train_ids = harmonize::detail::read_split_ids(f.dataset.string(), "train");
    const auto test_ids = harmonize::detail::read_split_ids(f.dataset.string(), "test");
    REQUIRE(train_ids.size() == 6);
    REQUIRE(test_ids.size() == 4);
    for (const auto& id : train_ids)
        for (const char* sub : {"composite_images", "real_images", "masks"})
            REQUIRE(fs::exists(f.dataset / sub / (id + ".png")));

    // The split lists are disjoint.
    for (const auto& id : test_ids)
        REQUIRE(std::find(train_ids.begin(), train_ids.end(), id) == train_ids.end());
}

TEST_CASE("train writes a parsable loss log and a loadable checkpoint") {
    const Fixture& f = fixture();
    const auto rows = lines_of(read_file(f.log));
    REQUIRE(rows.size() == 7);  // header + 2 epochs x 3 batches
    REQUIRE(rows[0] == "step,l_rec,l_ffhat,l_fhatb,total");
    REQUIRE(rows[1].rfind("0,", 0) == 0);
    REQUIRE(rows[6].rfind("5,", 0) == 0);

    harmonize::Checkpoint ck = harmonize::load_checkpoint(f.ckpt.string());
    const auto meta = harmonize::parse_kv(ck.meta_text);
    REQUIRE(meta.at("step") == "6");
    REQUIRE(meta.at("epoch") == "2");
    const auto cfg = harmonize::parse_kv(ck.config_text);
    REQUIRE(cfg.at("resolution") == "32");
    REQUIRE(cfg.at("code_dim") == "4");
}

TEST_CASE("repeating a seeded training run reproduces its artifacts byte for byte") {
    const Fixture& f = fixture();
    const fs::path ck2 = f.dir / "model2.ckpt";
    const fs::path log2 = f.dir / "loss2.csv";
    CmdResult r = run_tool(
        "train --dataset " + f.dataset.string() + " --checkpoint " + ck2.string() + " --log " +
        log2.string() +
        " --resolution 32 --code-dim 4 --epochs 2 --batch-size 2 --gen-base-width 8 --seed 11");
    REQUIRE(r.code == 0);
    REQUIRE(read_file(f.ckpt) == read_file(ck2));
    REQUIRE(read_file(f.log) == read_file(log2));
}

TEST_CASE("harmonize writes the same image the library produces") {
    const Fixture& f = fixture();
    const std::string id = test_id(0);
    const fs::path out = f.dir / "harmonized.png";
    CmdResult r = run_tool("harmonize --checkpoint " + f.ckpt.string() + " --composite " +
                           (f.dataset / "composite_images" / (id + ".png")).string() + " --mask " +
                           (f.dataset / "masks" / (id + ".png")).string() + " --out " +
                           out.string());
    REQUIRE(r.code == 0);
    REQUIRE(r.contains("wrote " + out.string()));

    harmonize::Tensor<float> cli_px = harmonize::read_png_rgb(out.string());
    REQUIRE(cli_px.shape() == harmonize::Shape{3, 32, 32});

    harmonize::Trainer tr =
        harmonize::Trainer::from_checkpoint(harmonize::load_checkpoint(f.ckpt.string()));
    harmonize::Tensor<float> comp =
        harmonize::read_png_rgb((f.dataset / "composite_images" / (id + ".png")).string());
    harmonize::Tensor<float> mask = harmonize::binarize(
        harmonize::read_png_gray((f.dataset / "masks" / (id + ".png")).string()));
    harmonize::Tensor<float> want =
        harmonize::harmonize_single(tr.generator(), tr.extractor(), comp, mask);
    for (std::size_t i = 0; i < want.numel(); ++i)
        REQUIRE(cli_px[i] == float(harmonize::quantize8(want[i])) / 255.0f);
}

TEST_CASE("bg-harmonize matches the background-direction library path") {
    const Fixture& f = fixture();
    const std::string id = test_id(1);
    const fs::path out = f.dir / "bg_harmonized.png";
    CmdResult r = run_tool("bg-harmonize --checkpoint " + f.ckpt.string() + " --composite " +
                           (f.dataset / "composite_images" / (id + ".png")).string() + " --mask " +
                           (f.dataset / "masks" / (id + ".png")).string() + " --out " +
                           out.string());
    REQUIRE(r.code == 0);

    harmonize::Trainer tr =
        harmonize::Trainer::from_checkpoint(harmonize::load_checkpoint(f.ckpt.string()));
    harmonize::Tensor<float> comp =
        harmonize::read_png_rgb((f.dataset / "composite_images" / (id + ".png")).string());
    harmonize::Tensor<float> mask = harmonize::binarize(
        harmonize::read_png_gray((f.dataset / "masks" / (id + ".png")).string()));
    harmonize::Tensor<float> want =
        harmonize::background_harmonize_single(tr.generator(), tr.extractor(), comp, mask);
    harmonize::Tensor<float> cli_px = harmonize::read_png_rgb(out.string());
    for (std::size_t i = 0; i < want.numel(); ++i)
        REQUIRE(cli_px[i] == float(harmonize::quantize8(want[i])) / 255.0f);

    // The two directions disagree on this fixture.
    REQUIRE(read_file(out) != read_file(f.dir / "harmonized.png"));
}

TEST_CASE("evaluate reports per-image metrics, bins, and the improvement count") {
    const Fixture& f = fixture();
    const fs::path csv = f.dir / "metrics.csv";
    CmdResult r = run_tool("evaluate --dataset " + f.dataset.string() + " --checkpoint " +
                           f.ckpt.string() + " --out " + csv.string());
    REQUIRE(r.code == 0);
    REQUIRE(r.contains("test: 4 images"));
    REQUIRE(r.contains("harmonized  mean mse"));
    REQUIRE(r.contains("composite   mean mse"));
    REQUIRE(r.contains("psnr improved on "));

    const auto rows = lines_of(read_file(csv));
    REQUIRE(rows.at(0) == "id,mse,fmse,psnr,fg_ratio");
    std::size_t data_rows = 0, bin_rows = 0;
    bool bin_header = false;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].empty()) continue;
        if (rows[i].rfind("# foreground-ratio bins", 0) == 0)
            bin_header = true;
        else if (rows[i][0] == '#')
            ++bin_rows;
        else
            ++data_rows;
    }
    REQUIRE(data_rows == 4);
    REQUIRE(bin_header);
    REQUIRE(bin_rows == 4);

    // The first row agrees exactly with an in-process recomputation.
    const std::string id = test_id(0);
    std::istringstream row(rows.at(1));
    std::string f_id, f_mse, f_fmse, f_psnr, f_ratio;
    std::getline(row, f_id, ',');
    std::getline(row, f_mse, ',');
    std::getline(row, f_fmse, ',');
    std::getline(row, f_psnr, ',');
    std::getline(row, f_ratio, ',');
    REQUIRE(f_id == id);

    harmonize::Trainer tr =
        harmonize::Trainer::from_checkpoint(harmonize::load_checkpoint(f.ckpt.string()));
    auto data = harmonize::load_dataset(f.dataset.string(), "test", 32);
    harmonize::Tensor<float> result = harmonize::harmonize_single(
        tr.generator(), tr.extractor(), data[0].composite, data[0].mask);
    harmonize::MetricRecord want =
        harmonize::compute_metrics(result, data[0].real, data[0].mask, id);
    REQUIRE(std::stod(f_mse) == want.mse);
    REQUIRE(std::stod(f_fmse) == want.fmse);
    REQUIRE(std::stod(f_psnr) == want.psnr);
    REQUIRE(std::stod(f_ratio) == want.fg_ratio);
}

TEST_CASE("analyze-codes exports the four code files and the ordering ratios") {
    const Fixture& f = fixture();
    const std::string prefix = (f.dir / "codes").string();
    CmdResult r = run_tool("analyze-codes --dataset " + f.dataset.string() + " --checkpoint " +
                           f.ckpt.string() + " --out-prefix " + prefix);
    REQUIRE(r.code == 0);
    REQUIRE(r.contains("distance requirements over 4 triplets:"));
    REQUIRE(r.contains("all six"));
    REQUIRE(r.contains("d(b,f)<d(b,f~)"));

    for (const char* suffix : {"_zb.txt", "_zf.txt", "_zf_tilde.txt", "_zf_hat.txt"}) {
        const auto rows = lines_of(read_file(prefix + suffix));
        REQUIRE(rows.size() == 4);  // one per test image
        for (const auto& row : rows) {
            std::istringstream is(row);
            float v;
            std::size_t n = 0;
            while (is >> v) ++n;
            REQUIRE(n == 4);  // code_dim
        }
    }

    // The background codes match an in-process forward pass exactly.
    harmonize::Trainer tr =
        harmonize::Trainer::from_checkpoint(harmonize::load_checkpoint(f.ckpt.string()));
    auto data = harmonize::load_dataset(f.dataset.string(), "test", 32);
    harmonize::NoGradGuard no_grad;
    harmonize::Tensor<float> comp = harmonize::stack_batch<float>({data[0].composite});
    harmonize::Tensor<float> mbar =
        harmonize::mask_complement(harmonize::stack_batch<float>({data[0].mask}));
    const auto want = tr.extractor().forward(comp, mbar, false).values();

    std::istringstream first_row(lines_of(read_file(prefix + "_zb.txt")).at(0));
    for (float expected : want) {
        std::string field;
        REQUIRE(first_row >> field);
        REQUIRE(std::stof(field) == expected);
    }
}

TEST_CASE("inharmony prints the extractor's region distance") {
    const Fixture& f = fixture();
    const std::string id = test_id(2);
    CmdResult r = run_tool("inharmony --checkpoint " + f.ckpt.string() + " --image " +
                           (f.dataset / "composite_images" / (id + ".png")).string() + " --mask " +
                           (f.dataset / "masks" / (id + ".png")).string());
    REQUIRE(r.code == 0);

    harmonize::Trainer tr =
        harmonize::Trainer::from_checkpoint(harmonize::load_checkpoint(f.ckpt.string()));
    harmonize::Tensor<float> img =
        harmonize::read_png_rgb((f.dataset / "composite_images" / (id + ".png")).string());
    harmonize::Tensor<float> mask = harmonize::binarize(
        harmonize::read_png_gray((f.dataset / "masks" / (id + ".png")).string()));
    const double want = harmonize::inharmony_score(img, mask, tr.extractor());
    REQUIRE(std::stod(r.output) == want);
}

TEST_CASE("bt-rank fits a votes file and honors --out") {
    const Fixture& f = fixture();
    const fs::path votes = f.dir / "votes.csv";
    {
        std::ofstream v(votes);
        v << "item_a,item_b,winner\nA,B,A\nA,B,A\nB,A,A\nA,B,B\n";
    }
    CmdResult r = run_tool("bt-rank --votes " + votes.string());
    REQUIRE(r.code == 0);
    const auto rows = lines_of(r.output);
    REQUIRE(rows.at(0) == "item,strength,log_score");
    REQUIRE(rows.at(1).rfind("A,", 0) == 0);  // strongest first
    REQUIRE(rows.at(2).rfind("B,", 0) == 0);
    auto parse_row = [](const std::string& row) {
        std::istringstream is(row);
        std::string item, s, l;
        std::getline(is, item, ',');
        std::getline(is, s, ',');
        std::getline(is, l, ',');
        return std::pair<double, double>{std::stod(s), std::stod(l)};
    };
    auto [sa, la] = parse_row(rows.at(1));
    auto [sb, lb] = parse_row(rows.at(2));
    REQUIRE_THAT(sa, Catch::Matchers::WithinAbs(1.5, 1e-6));
    REQUIRE_THAT(sb, Catch::Matchers::WithinAbs(0.5, 1e-6));
    REQUIRE_THAT(la, Catch::Matchers::WithinAbs(0.5493061443340548, 1e-9));
    REQUIRE_THAT(lb, Catch::Matchers::WithinAbs(-0.5493061443340548, 1e-9));

    const fs::path table = f.dir / "ranking.csv";
    CmdResult r2 = run_tool("bt-rank --votes " + votes.string() + " --out " + table.string());
    REQUIRE(r2.code == 0);
    REQUIRE(r2.contains("wrote " + table.string()));
    REQUIRE(lines_of(read_file(table)) == rows);
}

TEST_CASE("bt-rank rejects bad vote files with exit code one") {
    const Fixture& f = fixture();

    const fs::path split = f.dir / "votes_split.csv";
    {
        std::ofstream v(split);
        v << "A,B,A\nC,D,C\n";
    }
    CmdResult r = run_tool("bt-rank --votes " + split.string());
    REQUIRE(r.code == 1);
    REQUIRE(r.contains("disconnected"));
    REQUIRE(r.contains("{A,B}"));
    REQUIRE(r.contains("{C,D}"));

    const fs::path malformed = f.dir / "votes_bad.csv";
    {
        std::ofstream v(malformed);
        v << "A,B,A\njust-one-field\n";
    }
    CmdResult r2 = run_tool("bt-rank --votes " + malformed.string());
    REQUIRE(r2.code == 1);
    REQUIRE(r2.contains("line 2 is not item_a,item_b,winner"));

    CmdResult r3 = run_tool("bt-rank --votes " + (f.dir / "no_such_votes.csv").string());
    REQUIRE(r3.code == 1);
    REQUIRE(r3.contains("cannot open votes file"));

    const fs::path self = f.dir / "votes_self.csv";
    {
        std::ofstream v(self);
        v << "A,A,A\nA,B,A\n";
    }
    CmdResult r4 = run_tool("bt-rank --votes " + self.string());
    REQUIRE(r4.code == 1);
    REQUIRE(r4.contains("with itself"));
}

TEST_CASE("config files supply defaults and explicit flags win") {
    const Fixture& f = fixture();
    const fs::path cfg = f.dir / "synth.cfg";
    {
        std::ofstream c(cfg);
        c << "# tiny dataset\nout=" << (f.dir / "cfg_data").string()
          << "\nseed=5\ntrain=2\ntest=1\nresolution=32\n";
    }
    CmdResult r = run_tool("synth-data --config " + cfg.string());
    REQUIRE(r.code == 0);
    REQUIRE(r.contains("wrote 2 train + 1 test"));
    REQUIRE(fs::exists(f.dir / "cfg_data" / "train.txt"));

    // A flag after --config overrides the file's value.
    CmdResult r2 = run_tool("synth-data --config " + cfg.string() + " --train 3 --out " +
                            (f.dir / "cfg_data2").string());
    REQUIRE(r2.code == 0);
    REQUIRE(r2.contains("wrote 3 train + 1 test"));

    const fs::path bad = f.dir / "bad.cfg";
    {
        std::ofstream c(bad);
        c << "bogus-key=1\n";
    }
    REQUIRE(run_tool("synth-data --config " + bad.string() + " --out " +
                     (f.dir / "cfg_data3").string())
                .code == 1);

    const fs::path nokv = f.dir / "nokv.cfg";
    {
        std::ofstream c(nokv);
        c << "this line has no equals sign\n";
    }
    CmdResult r3 = run_tool("synth-data --config " + nokv.string());
    REQUIRE(r3.code == 1);
    REQUIRE(r3.contains("not key=value"));

    CmdResult r4 = run_tool("synth-data --config " + (f.dir / "missing.cfg").string());
    REQUIRE(r4.code == 1);
    REQUIRE(r4.contains("cannot open config file"));
}

TEST_CASE("usage problems exit with one, runtime failures with two") {
    const Fixture& f = fixture();

    REQUIRE(run_tool("").code == 1);                         // subcommand required
    REQUIRE(run_tool("no-such-command").code == 1);          // unknown subcommand
    REQUIRE(run_tool("synth-data").code == 1);               // missing required --out
    REQUIRE(run_tool("bt-rank --votes x --frobnicate").code == 1);  // unknown flag

    // Runtime failures: unreadable checkpoint, garbage checkpoint, missing split.
    CmdResult r1 = run_tool("inharmony --checkpoint " + (f.dir / "none.ckpt").string() +
                            " --image x.png --mask y.png");
    REQUIRE(r1.code == 2);
    REQUIRE(r1.contains("cannot open"));

    const fs::path garbage = f.dir / "garbage.ckpt";
    {
        std::ofstream g(garbage);
        g << "this is not a checkpoint at all, but it is long enough to scan";
    }
    CmdResult r2 = run_tool("harmonize --checkpoint " + garbage.string() +
                            " --composite x.png --mask y.png --out z.png");
    REQUIRE(r2.code == 2);
    REQUIRE(r2.contains("bad magic"));

    CmdResult r3 = run_tool("train --dataset " + (f.dir / "no_data").string() +
                            " --checkpoint " + (f.dir / "x.ckpt").string());
    REQUIRE(r3.code == 2);
    REQUIRE(r3.contains("missing split list"));

    CmdResult r4 = run_tool("harmonize --checkpoint " + f.ckpt.string() +
                            " --composite " + (f.dir / "missing.png").string() + " --mask " +
                            (f.dataset / "masks" / (test_id(0) + ".png")).string() + " --out " +
                            (f.dir / "z.png").string());
    REQUIRE(r4.code == 2);
    REQUIRE(r4.contains("cannot read PNG"));
}

TEST_CASE("mismatched or odd-sized inputs are rejected unless resized") {
    const Fixture& f = fixture();

    // A 48x48 composite with a centred block mask: not a multiple of 32.
    harmonize::Rng rng(77);
    auto big = test_util::random_tensor<float>(rng, harmonize::Shape{3, 48, 48}, 0.0f, 1.0f);
    harmonize::Tensor<float> big_mask(harmonize::Shape{1, 48, 48});
    for (std::size_t y = 12; y < 36; ++y)
        for (std::size_t x = 12; x < 36; ++x) big_mask[y * 48 + x] = 1.0f;
    const fs::path comp_png = f.dir / "big_comp.png";
    const fs::path mask_png = f.dir / "big_mask.png";
    harmonize::write_png_rgb(comp_png.string(), big);
    harmonize::write_png_gray(mask_png.string(), big_mask);

    const std::string base = "harmonize --checkpoint " + f.ckpt.string() + " --composite " +
                             comp_png.string() + " --mask " + mask_png.string() + " --out " +
                             (f.dir / "big_out.png").string();
    CmdResult r = run_tool(base);
    REQUIRE(r.code == 1);
    REQUIRE(r.contains("multiple of 32"));

    CmdResult r2 = run_tool(base + " --resize 32");
    REQUIRE(r2.code == 0);
    REQUIRE(harmonize::read_png_rgb((f.dir / "big_out.png").string()).shape() ==
            harmonize::Shape{3, 32, 32});

    // Mask extent different from the image extent.
    CmdResult r3 = run_tool("inharmony --checkpoint " + f.ckpt.string() + " --image " +
                            (f.dataset / "composite_images" / (test_id(0) + ".png")).string() +
                            " --mask " + mask_png.string());
    REQUIRE(r3.code == 1);
    REQUIRE(r3.contains("does not match image"));
}
