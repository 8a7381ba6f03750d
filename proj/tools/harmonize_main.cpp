// Command-line surface for the harmonization toolkit.
//
// Subcommands: synth-data, train, harmonize, bg-harmonize, evaluate,
// analyze-codes, inharmony, bt-rank. Every subcommand accepts --config FILE
// with key=value lines (flag spellings without the leading dashes);
// command-line flags override config-file values.
//
// Exit codes: 0 success, 1 validation/usage error, 2 runtime failure.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "harmonize/harmonize.hpp"

namespace {

using harmonize::detail::num_str;

// Each subcommand takes --config FILE where FILE holds key=value lines using
// the option spellings without leading dashes ("seed=7"). expand_config_args
// splices those lines into argv as --key=value tokens right after the
// subcommand name, and every option takes the last value it sees, so explicit
// command-line flags override the file.
void add_config_option(CLI::App* cmd) {
    cmd->add_option("--config", "Read options from a key=value file")
        ->option_text("FILE");
    for (CLI::Option* opt : cmd->get_options()) {
        opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
}

std::vector<std::string> config_tokens(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::invalid_argument("cannot open config file: " + path);
    }
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto last = line.find_last_not_of(" \t");
        const std::string entry = line.substr(first, last - first + 1);
        if (entry.find('=') == std::string::npos) {
            throw std::invalid_argument("config line is not key=value: " + entry);
        }
        tokens.push_back("--" + entry);
    }
    return tokens;
}

std::vector<std::string> expand_config_args(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::size_t insert_at = args.size();
    std::vector<std::string> spliced;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (insert_at == args.size() && !args[i].empty() && args[i][0] != '-') {
            insert_at = i + 1;  // directly after the subcommand name
        }
        if (args[i] == "--config" && i + 1 < args.size()) {
            spliced = config_tokens(args[i + 1]);
        } else if (args[i].rfind("--config=", 0) == 0) {
            spliced = config_tokens(args[i].substr(9));
        }
    }
    args.insert(args.begin() + static_cast<std::ptrdiff_t>(insert_at),
                spliced.begin(), spliced.end());
    return args;
}

harmonize::Trainer trainer_from_file(const std::string& path) {
    return harmonize::Trainer::from_checkpoint(harmonize::load_checkpoint(path));
}

struct LoadedPair {
    harmonize::Tensor<float> image;
    harmonize::Tensor<float> mask;
};

LoadedPair load_image_mask(const std::string& image_path, const std::string& mask_path,
                           std::size_t resize) {
    LoadedPair p{harmonize::read_png_rgb(image_path), harmonize::read_png_gray(mask_path)};
    if (resize != 0) {
        p.image = harmonize::resize_bilinear(p.image, resize, resize);
        p.mask = harmonize::resize_bilinear(p.mask, resize, resize);
    }
    if (p.mask.dim(1) != p.image.dim(1) || p.mask.dim(2) != p.image.dim(2))
        throw std::invalid_argument("mask size " + std::to_string(p.mask.dim(2)) + "x" +
                                    std::to_string(p.mask.dim(1)) + " does not match image " +
                                    std::to_string(p.image.dim(2)) + "x" +
                                    std::to_string(p.image.dim(1)) +
                                    " (use --resize to bring both to one size)");
    if (p.image.dim(1) % 32 != 0 || p.image.dim(2) % 32 != 0)
        throw std::invalid_argument("image extent must be a multiple of 32; got " +
                                    std::to_string(p.image.dim(2)) + "x" +
                                    std::to_string(p.image.dim(1)) +
                                    " (use --resize to a supported size)");
    p.mask = harmonize::binarize(p.mask);
    return p;
}

void print_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

void write_code_file(const std::string& path,
                     const std::vector<std::vector<float>>& codes) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& code : codes) {
        for (std::size_t i = 0; i < code.size(); ++i) out << (i ? " " : "") << num_str(code[i]);
        out << "\n";
    }
}

// ---------------------------------------------------------------------------

void cmd_synth_data(CLI::App* root) {
    auto* cmd = root->add_subcommand("synth-data", "Generate a synthetic composite dataset");
    auto opts = std::make_shared<harmonize::SynthSpec>();
    auto train_count = std::make_shared<std::size_t>(200);
    auto test_count = std::make_shared<std::size_t>(40);
    auto out_dir = std::make_shared<std::string>();
    cmd->add_option("--out", *out_dir, "Output dataset directory")->required();
    cmd->add_option("--seed", opts->seed, "Random seed");
    cmd->add_option("--train", *train_count, "Number of training triplets");
    cmd->add_option("--test", *test_count, "Number of test triplets");
    cmd->add_option("--resolution", opts->resolution, "Square image size in pixels");
    cmd->add_option("--gain-min", opts->gain_min, "Foreground gain lower bound");
    cmd->add_option("--gain-max", opts->gain_max, "Foreground gain upper bound");
    cmd->add_option("--bias-min", opts->bias_min, "Foreground bias lower bound");
    cmd->add_option("--bias-max", opts->bias_max, "Foreground bias upper bound");
    cmd->add_option("--gamma-min", opts->gamma_min, "Foreground gamma lower bound");
    cmd->add_option("--gamma-max", opts->gamma_max, "Foreground gamma upper bound");
    cmd->add_option("--ratio-min", opts->ratio_min, "Foreground area fraction lower bound");
    cmd->add_option("--ratio-max", opts->ratio_max, "Foreground area fraction upper bound");
    add_config_option(cmd);
    cmd->callback([opts, train_count, test_count, out_dir] {
        opts->count = *train_count + *test_count;
        harmonize::generate_dataset(*out_dir, *opts, *train_count, *test_count);
        std::cout << "wrote " << *train_count << " train + " << *test_count << " test triplets to "
                  << *out_dir << "\n";
    });
}

void cmd_train(CLI::App* root) {
    auto* cmd = root->add_subcommand("train", "Train extractor and generator jointly");
    auto cfg = std::make_shared<harmonize::TrainConfig>();
    auto dataset = std::make_shared<std::string>();
    auto split = std::make_shared<std::string>("train");
    auto checkpoint = std::make_shared<std::string>();
    auto log_path = std::make_shared<std::string>();
    auto resume = std::make_shared<std::string>();
    cmd->add_option("--dataset", *dataset, "Dataset root directory")->required();
    cmd->add_option("--split", *split, "Split list to train on");
    cmd->add_option("--checkpoint", *checkpoint, "Checkpoint output path")->required();
    cmd->add_option("--log", *log_path, "Loss log CSV path");
    cmd->add_option("--resume", *resume,
                    "Resume from this checkpoint (its embedded config takes precedence)");
    cmd->add_option("--resolution", cfg->resolution, "Training resolution (multiple of 32)");
    cmd->add_option("--code-dim", cfg->code_dim, "Domain code dimension L");
    cmd->add_option("--margin", cfg->margin, "Triplet margin m");
    cmd->add_option("--lambda", cfg->lambda, "Triplet loss weight");
    cmd->add_flag("--detach-targets", cfg->detach_targets,
                  "Stop gradients through composite/real codes in the triplet terms");
    cmd->add_option("--epochs", cfg->epochs, "Training epochs");
    cmd->add_option("--batch-size", cfg->batch_size, "Batch size (>= 2)");
    cmd->add_option("--lr", cfg->lr, "Adam learning rate");
    cmd->add_option("--beta1", cfg->beta1, "Adam beta1");
    cmd->add_option("--beta2", cfg->beta2, "Adam beta2");
    cmd->add_option("--adam-eps", cfg->adam_eps, "Adam epsilon");
    cmd->add_option("--seed", cfg->seed, "Random seed");
    cmd->add_option("--init-std", cfg->init_std, "Weight init standard deviation");
    cmd->add_option("--checkpoint-every", cfg->checkpoint_every,
                    "Checkpoint period in epochs (0 = final only)");
    cmd->add_option("--gen-base-width", cfg->gen_base_width, "Generator first-level width");
    add_config_option(cmd);
    cmd->callback([cfg, dataset, split, checkpoint, log_path, resume] {
        std::vector<std::string> warnings;
        std::optional<harmonize::Trainer> trainer;
        if (!resume->empty())
            trainer.emplace(trainer_from_file(*resume));
        else
            trainer.emplace(*cfg);
        auto data = harmonize::load_dataset(*dataset, *split,
                                            trainer->config().resolution, &warnings);
        print_warnings(warnings);
        std::cout << "training on " << data.size() << " triplets at "
                  << trainer->config().resolution << "x" << trainer->config().resolution
                  << " from epoch " << trainer->epoch() << " to " << trainer->config().epochs
                  << "\n";
        trainer->train(data, *log_path, *checkpoint);
        std::cout << "finished at step " << trainer->step() << "; checkpoint written to "
                  << *checkpoint << "\n";
    });
}

void add_single_image_flags(CLI::App* cmd, std::shared_ptr<std::string> checkpoint,
                            std::shared_ptr<std::string> composite,
                            std::shared_ptr<std::string> mask, std::shared_ptr<std::string> out,
                            std::shared_ptr<std::size_t> resize) {
    cmd->add_option("--checkpoint", *checkpoint, "Trained checkpoint path")->required();
    cmd->add_option("--composite", *composite, "Input composite PNG")->required();
    cmd->add_option("--mask", *mask, "Foreground mask PNG")->required();
    cmd->add_option("--out", *out, "Output PNG path")->required();
    cmd->add_option("--resize", *resize, "Resize inputs to this square size first");
    add_config_option(cmd);
}

void cmd_harmonize(CLI::App* root) {
    auto* cmd = root->add_subcommand(
        "harmonize", "Translate the foreground into the background's appearance");
    auto ck = std::make_shared<std::string>(), comp = std::make_shared<std::string>(),
         mask = std::make_shared<std::string>(), out = std::make_shared<std::string>();
    auto resize = std::make_shared<std::size_t>(0);
    add_single_image_flags(cmd, ck, comp, mask, out, resize);
    cmd->callback([ck, comp, mask, out, resize] {
        harmonize::Trainer tr = trainer_from_file(*ck);
        LoadedPair p = load_image_mask(*comp, *mask, *resize);
        harmonize::Tensor<float> result =
            harmonize::harmonize_single(tr.generator(), tr.extractor(), p.image, p.mask);
        harmonize::write_png_rgb(*out, result);
        std::cout << "wrote " << *out << "\n";
    });
}

void cmd_bg_harmonize(CLI::App* root) {
    auto* cmd = root->add_subcommand(
        "bg-harmonize", "Translate the background toward the foreground's appearance");
    auto ck = std::make_shared<std::string>(), comp = std::make_shared<std::string>(),
         mask = std::make_shared<std::string>(), out = std::make_shared<std::string>();
    auto resize = std::make_shared<std::size_t>(0);
    add_single_image_flags(cmd, ck, comp, mask, out, resize);
    cmd->callback([ck, comp, mask, out, resize] {
        harmonize::Trainer tr = trainer_from_file(*ck);
        LoadedPair p = load_image_mask(*comp, *mask, *resize);
        harmonize::Tensor<float> result = harmonize::background_harmonize_single(
            tr.generator(), tr.extractor(), p.image, p.mask);
        harmonize::write_png_rgb(*out, result);
        std::cout << "wrote " << *out << "\n";
    });
}

void cmd_evaluate(CLI::App* root) {
    auto* cmd = root->add_subcommand("evaluate", "Harmonize a split and report metrics");
    auto dataset = std::make_shared<std::string>(), ck = std::make_shared<std::string>(),
         out = std::make_shared<std::string>();
    auto split = std::make_shared<std::string>("test");
    cmd->add_option("--dataset", *dataset, "Dataset root directory")->required();
    cmd->add_option("--checkpoint", *ck, "Trained checkpoint path")->required();
    cmd->add_option("--out", *out, "Metrics CSV output path")->required();
    cmd->add_option("--split", *split, "Split list to evaluate");
    add_config_option(cmd);
    cmd->callback([dataset, ck, out, split] {
        harmonize::Trainer tr = trainer_from_file(*ck);
        std::vector<std::string> warnings;
        auto data =
            harmonize::load_dataset(*dataset, *split, tr.config().resolution, &warnings);
        print_warnings(warnings);

        std::vector<harmonize::MetricRecord> harmonized, baseline;
        std::size_t psnr_improved = 0;
        for (const auto& t : data) {
            harmonize::Tensor<float> result =
                harmonize::harmonize_single(tr.generator(), tr.extractor(), t.composite, t.mask);
            harmonized.push_back(harmonize::compute_metrics(result, t.real, t.mask, t.id));
            baseline.push_back(harmonize::compute_metrics(t.composite, t.real, t.mask, t.id));
            psnr_improved += harmonized.back().psnr > baseline.back().psnr;
        }

        std::ofstream csv(*out, std::ios::trunc);
        if (!csv) throw std::runtime_error("cannot write " + *out);
        csv << "id,mse,fmse,psnr,fg_ratio\n";
        for (const auto& r : harmonized)
            csv << r.id << ',' << num_str(r.mse) << ',' << num_str(r.fmse) << ','
                << num_str(r.psnr) << ',' << num_str(r.fg_ratio) << '\n';
        const harmonize::BinnedSummary bins = harmonize::bin_by_fg_ratio(harmonized);
        csv << "\n# foreground-ratio bins: count, mean mse, mean fmse\n";
        for (const auto& b : bins.bins)
            csv << "# " << num_str(b.lo * 100) << "%-" << num_str(b.hi * 100) << "%," << b.count
                << ',' << num_str(b.mean_mse) << ',' << num_str(b.mean_fmse) << '\n';

        auto mean_of = [](const std::vector<harmonize::MetricRecord>& rs, auto field) {
            double acc = 0;
            for (const auto& r : rs) acc += field(r);
            return acc / static_cast<double>(rs.size());
        };
        auto mse_f = [](const harmonize::MetricRecord& r) { return r.mse; };
        auto fmse_f = [](const harmonize::MetricRecord& r) { return r.fmse; };
        auto psnr_f = [](const harmonize::MetricRecord& r) { return r.psnr; };
        std::cout << *split << ": " << data.size() << " images\n"
                  << "harmonized  mean mse " << num_str(mean_of(harmonized, mse_f))
                  << "  fmse " << num_str(mean_of(harmonized, fmse_f)) << "  psnr "
                  << num_str(mean_of(harmonized, psnr_f)) << "\n"
                  << "composite   mean mse " << num_str(mean_of(baseline, mse_f)) << "  fmse "
                  << num_str(mean_of(baseline, fmse_f)) << "  psnr "
                  << num_str(mean_of(baseline, psnr_f)) << "\n"
                  << "psnr improved on " << psnr_improved << "/" << data.size() << " images\n";
    });
}

void cmd_analyze_codes(CLI::App* root) {
    auto* cmd = root->add_subcommand(
        "analyze-codes", "Export the four domain codes per image and check distance orderings");
    auto dataset = std::make_shared<std::string>(), ck = std::make_shared<std::string>(),
         prefix = std::make_shared<std::string>();
    auto split = std::make_shared<std::string>("test");
    cmd->add_option("--dataset", *dataset, "Dataset root directory")->required();
    cmd->add_option("--checkpoint", *ck, "Trained checkpoint path")->required();
    cmd->add_option("--out-prefix", *prefix, "Prefix for the code text files")->required();
    cmd->add_option("--split", *split, "Split list to analyze");
    add_config_option(cmd);
    cmd->callback([dataset, ck, prefix, split] {
        harmonize::Trainer tr = trainer_from_file(*ck);
        std::vector<std::string> warnings;
        auto data =
            harmonize::load_dataset(*dataset, *split, tr.config().resolution, &warnings);
        print_warnings(warnings);

        harmonize::NoGradGuard no_grad;
        std::vector<harmonize::CodeQuad> quads;
        std::vector<std::vector<float>> zb, zf, zft, zfh;
        for (const auto& t : data) {
            auto batch1 = [](const harmonize::Tensor<float>& x) {
                return harmonize::stack_batch<float>({x});
            };
            harmonize::Tensor<float> comp = batch1(t.composite), real = batch1(t.real),
                                     m = batch1(t.mask);
            harmonize::Tensor<float> mbar = harmonize::mask_complement(m);
            harmonize::Tensor<float> out = harmonize::harmonize_images(
                tr.generator(), tr.extractor(), comp, m, false);
            harmonize::CodeQuad q;
            q.z_b = tr.extractor().forward(comp, mbar, false).values();
            q.zf_tilde = tr.extractor().forward(comp, m, false).values();
            q.z_f = tr.extractor().forward(real, m, false).values();
            q.zf_hat = tr.extractor().forward(out, m, false).values();
            zb.push_back(q.z_b);
            zft.push_back(q.zf_tilde);
            zf.push_back(q.z_f);
            zfh.push_back(q.zf_hat);
            quads.push_back(std::move(q));
        }
        write_code_file(*prefix + "_zb.txt", zb);
        write_code_file(*prefix + "_zf.txt", zf);
        write_code_file(*prefix + "_zf_tilde.txt", zft);
        write_code_file(*prefix + "_zf_hat.txt", zfh);

        const harmonize::RequirementReport report = harmonize::requirement_ratios(quads);
        std::cout << "distance requirements over " << report.count << " triplets:\n";
        for (std::size_t i = 0; i < 6; ++i)
            std::cout << "  " << harmonize::RequirementReport::names()[i] << "  "
                      << num_str(report.ratios[i]) << "\n";
        std::cout << "  all six  " << num_str(report.all_six) << "\n";
    });
}

void cmd_inharmony(CLI::App* root) {
    auto* cmd = root->add_subcommand("inharmony",
                                     "Score how inharmonious an image's foreground looks");
    auto ck = std::make_shared<std::string>(), image = std::make_shared<std::string>(),
         mask = std::make_shared<std::string>();
    auto resize = std::make_shared<std::size_t>(0);
    cmd->add_option("--checkpoint", *ck, "Trained checkpoint path")->required();
    cmd->add_option("--image", *image, "Image PNG")->required();
    cmd->add_option("--mask", *mask, "Foreground mask PNG")->required();
    cmd->add_option("--resize", *resize, "Resize inputs to this square size first");
    add_config_option(cmd);
    cmd->callback([ck, image, mask, resize] {
        harmonize::Trainer tr = trainer_from_file(*ck);
        LoadedPair p = load_image_mask(*image, *mask, *resize);
        std::cout << num_str(harmonize::inharmony_score(p.image, p.mask, tr.extractor()))
                  << "\n";
    });
}

void cmd_bt_rank(CLI::App* root) {
    auto* cmd = root->add_subcommand("bt-rank",
                                     "Fit a pairwise-comparison ranking from a votes CSV");
    auto votes_path = std::make_shared<std::string>(), out = std::make_shared<std::string>();
    auto max_iter = std::make_shared<std::size_t>(10000);
    auto tol = std::make_shared<double>(1e-10);
    auto pseudo = std::make_shared<bool>(false);
    cmd->add_option("--votes", *votes_path, "CSV of item_a,item_b,winner rows")->required();
    cmd->add_option("--out", *out, "Write the ranking CSV here instead of stdout");
    cmd->add_option("--max-iter", *max_iter, "Maximum fitting sweeps");
    cmd->add_option("--tol", *tol, "Gradient-norm convergence tolerance");
    cmd->add_flag("--pseudo-counts", *pseudo, "Add 0.5 pseudo-wins per compared pair");
    add_config_option(cmd);
    cmd->callback([votes_path, out, max_iter, tol, pseudo] {
        std::ifstream in(*votes_path);
        if (!in) throw std::invalid_argument("cannot open votes file " + *votes_path);
        std::vector<harmonize::PairwiseVote> votes;
        std::vector<std::string> items;
        auto note_item = [&](const std::string& id) {
            for (const auto& i : items)
                if (i == id) return;
            items.push_back(id);
        };
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || (line_no == 1 && line == "item_a,item_b,winner")) continue;
            std::istringstream row(line);
            harmonize::PairwiseVote v;
            if (!std::getline(row, v.item_a, ',') || !std::getline(row, v.item_b, ',') ||
                !std::getline(row, v.winner))
                throw std::invalid_argument("votes line " + std::to_string(line_no) +
                                            " is not item_a,item_b,winner");
            note_item(v.item_a);
            note_item(v.item_b);
            votes.push_back(std::move(v));
        }
        harmonize::BtResult r = harmonize::bt_fit(votes, items, *max_iter, *tol, *pseudo);

        std::vector<std::size_t> order(items.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return r.strengths[a] > r.strengths[b]; });
        std::ostringstream table;
        table << "item,strength,log_score\n";
        for (std::size_t i : order)
            table << r.items[i] << ',' << num_str(r.strengths[i]) << ','
                  << num_str(r.log_scores[i]) << '\n';
        if (out->empty()) {
            std::cout << table.str();
        } else {
            std::ofstream f(*out, std::ios::trunc);
            if (!f) throw std::runtime_error("cannot write " + *out);
            f << table.str();
            std::cout << "wrote " << *out << "\n";
        }
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Background-guided image harmonization toolkit"};
    app.require_subcommand(1);
    cmd_synth_data(&app);
    cmd_train(&app);
    cmd_harmonize(&app);
    cmd_bg_harmonize(&app);
    cmd_evaluate(&app);
    cmd_analyze_codes(&app);
    cmd_inharmony(&app);
    cmd_bt_rank(&app);

    try {
        std::vector<std::string> args = expand_config_args(argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(args);
        return 0;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
