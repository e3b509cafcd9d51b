#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "emr/harness.hpp"
#include "emr/service.hpp"
#include "emr/synthetic.hpp"

namespace {

volatile std::sig_atomic_t g_stop = 0;

void on_signal(int) { g_stop = 1; }

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw emr::Error("IoError", "cannot write " + path.string());
    out << text;
}

struct CommonInputs {
    std::string corpus, seed, holdout, out, boilerplate;
    double tau = 0.1, c = 1.0;
};

void add_common(CLI::App* cmd, CommonInputs& in) {
    cmd->add_option("--corpus", in.corpus, "corpus JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed-labels", in.seed, "seed label JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--holdout", in.holdout, "held-out label JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", in.out, "report CSV (stdout when omitted)");
    cmd->add_option("--boilerplate", in.boilerplate, "boilerplate pattern file")->check(CLI::ExistingFile);
    cmd->add_option("--tau", in.tau, "unknown band half-width")->capture_default_str();
    cmd->add_option("--c", in.c, "SVM cost")->capture_default_str();
}

emr::Corpus open_corpus(const std::string& path, const std::string& boilerplate) {
    return emr::load_corpus(path, boilerplate.empty() ? emr::BoilerplateConfig::defaults()
                                                      : emr::load_boilerplate_config(boilerplate));
}

emr::HarnessOptions harness_options(const CommonInputs& in) {
    emr::HarnessOptions opts;
    opts.engine.hyper.tau = in.tau;
    opts.engine.hyper.c = in.c;
    return opts;
}

void emit(const CommonInputs& in, const emr::ConvergenceReport& report) {
    if (in.out.empty()) std::cout << emr::report_csv(report);
    else emr::write_report_csv(in.out, report);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Interactive review of clinical report variables"};
    app.require_subcommand(1);

    emr::ServiceConfig serve_cfg;
    std::string serve_boilerplate, serve_static;
    auto* serve = app.add_subcommand("serve", "run the review service");
    serve->add_option("--corpus", serve_cfg.corpus, "corpus JSON")->required()->check(CLI::ExistingFile);
    serve->add_option("--seed-labels", serve_cfg.seed_labels, "seed label JSON")->required()->check(CLI::ExistingFile);
    serve->add_option("--data-dir", serve_cfg.data_dir, "model and ledger directory")->required();
    serve->add_option("--port", serve_cfg.port, "listen port (0 picks one)")->capture_default_str();
    serve->add_option("--host", serve_cfg.host, "listen address")->capture_default_str();
    serve->add_option("--boilerplate", serve_boilerplate, "boilerplate pattern file")->check(CLI::ExistingFile);
    serve->add_option("--static-dir", serve_static, "UI assets served at /")->check(CLI::ExistingDirectory);
    serve->add_option("--tau", serve_cfg.tau, "unknown band half-width")->capture_default_str();
    serve->add_option("--c", serve_cfg.c, "SVM cost")->capture_default_str();

    auto* harness = app.add_subcommand("harness", "scripted evaluation");
    harness->require_subcommand(1);
    CommonInputs replay_in;
    std::string script_path;
    auto* replay = harness->add_subcommand("replay", "replay a feedback script");
    add_common(replay, replay_in);
    replay->add_option("--script", script_path, "feedback script (JSON lines)")->required()->check(CLI::ExistingFile);

    CommonInputs policy_in;
    std::string policy_name, gold_path, phrases_path, script_out;
    std::size_t budget = 0, retrain_every = 10;
    auto* policy = harness->add_subcommand("policy", "simulate a labeling policy");
    add_common(policy, policy_in);
    policy->add_option("--policy", policy_name, "doc | phrase")->required();
    policy->add_option("--budget", budget, "number of feedback actions")->required();
    policy->add_option("--retrain-every", retrain_every, "actions between retrains")->capture_default_str();
    policy->add_option("--gold", gold_path, "gold label JSON")->required()->check(CLI::ExistingFile);
    policy->add_option("--phrases", phrases_path, "trigger phrase JSON (phrase policy)")->check(CLI::ExistingFile);
    policy->add_option("--write-script", script_out, "also write the generated script");

    std::size_t synth_docs = 280, synth_vars = 14, synth_seed_docs = 30, synth_holdout = 60;
    std::uint64_t synth_seed = 7;
    std::string synth_dir;
    auto* synth = app.add_subcommand("synth", "write a synthetic corpus with gold, seed and held-out labels");
    synth->add_option("--out-dir", synth_dir, "output directory")->required();
    synth->add_option("--documents", synth_docs)->capture_default_str();
    synth->add_option("--variables", synth_vars)->capture_default_str()->check(CLI::Range(1, 14));
    synth->add_option("--seed", synth_seed)->capture_default_str();
    synth->add_option("--seed-docs", synth_seed_docs)->capture_default_str();
    synth->add_option("--holdout-docs", synth_holdout)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*serve) {
            if (!serve_boilerplate.empty()) serve_cfg.boilerplate = serve_boilerplate;
            if (!serve_static.empty()) serve_cfg.static_dir = serve_static;
            emr::Service service(serve_cfg);
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            const int port = service.start();
            std::cout << "listening on http://" << serve_cfg.host << ":" << port << std::endl;
            while (!g_stop && service.running()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
            service.stop();
        } else if (*replay) {
            const emr::Corpus corpus = open_corpus(replay_in.corpus, replay_in.boilerplate);
            const auto seed = emr::load_labels(replay_in.seed, &corpus);
            const auto holdout = emr::load_labels(replay_in.holdout, &corpus);
            const auto script = emr::load_script(script_path, &corpus);
            emit(replay_in, emr::replay(corpus, seed, script, holdout, harness_options(replay_in)));
        } else if (*policy) {
            const emr::Corpus corpus = open_corpus(policy_in.corpus, policy_in.boilerplate);
            const auto seed = emr::load_labels(policy_in.seed, &corpus);
            const auto holdout = emr::load_labels(policy_in.holdout, &corpus);
            const auto gold = emr::load_labels(gold_path, &corpus);
            std::vector<emr::TriggerPhrase> phrases;
            if (!phrases_path.empty()) phrases = emr::load_trigger_phrases(phrases_path);
            emr::PolicyOptions opts;
            opts.policy = emr::parse_policy(policy_name);
            opts.budget = budget;
            opts.retrain_every = retrain_every;
            opts.harness = harness_options(policy_in);
            if (opts.policy == emr::Policy::PhraseFirst && phrases.empty())
                throw emr::Error("InvalidPolicy", "the phrase policy needs --phrases");
            if (!script_out.empty())
                write_text(script_out, emr::script_to_jsonl(emr::policy_script(corpus, seed, gold, phrases, holdout, opts)));
            emit(policy_in, emr::policy_run(corpus, seed, gold, phrases, holdout, opts));
        } else if (*synth) {
            const auto spec = emr::default_synthetic_spec(synth_docs, synth_seed, synth_vars);
            const auto data = emr::generate_synthetic_corpus(spec);
            const auto split = emr::split_gold(data.corpus, data.gold, synth_seed_docs, synth_holdout, synth_seed + 1);
            const std::filesystem::path dir = synth_dir;
            std::filesystem::create_directories(dir);
            write_text(dir / "corpus.json", emr::corpus_to_json(data.corpus));
            emr::save_labels(dir / "gold.json", data.gold);
            emr::save_labels(dir / "seed.json", split.seed);
            emr::save_labels(dir / "holdout.json", split.holdout);
            write_text(dir / "phrases.json", emr::trigger_phrases_to_json(emr::trigger_phrases(spec.rules)));
            std::cout << data.corpus.size() << " documents, " << data.corpus.variables().size() << " variables, "
                      << split.seed.size() << " seed labels, " << split.holdout.size() << " held-out labels\n";
        }
    } catch (const emr::Error& e) {
        std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
