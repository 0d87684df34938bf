// Generates a synthetic mention corpus with matching frames and curated map,
// for demos and desk-scale experiments.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ifsed/corpus.hpp"
#include "ifsed/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"synthetic corpus generator"};
  ifsed::SyntheticCorpusSpec spec;
  std::string out_dir = "data";
  std::uint64_t seed = 1;
  app.add_option("--classes", spec.n_classes, "number of event types");
  app.add_option("--big-classes", spec.big_classes, "classes with base-scale data");
  app.add_option("--big-count", spec.big_count, "mentions per big class");
  app.add_option("--small-count", spec.small_count, "mentions per small class");
  app.add_option("--shared-prob", spec.shared_prob,
                 "probability of shared-vocabulary context tokens");
  app.add_option("--duplicate-every", spec.duplicate_every,
                 "insert an exact duplicate every k mentions");
  app.add_option("--seed", seed, "generator seed");
  app.add_option("--out", out_dir, "output directory");
  CLI11_PARSE(app, argc, argv);
  spec.seed = seed;

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);

  auto corpus = ifsed::make_synthetic_corpus(spec);
  ifsed::write_mentions_jsonl(out_dir + "/corpus.jsonl", corpus);

  auto labels = ifsed::synthetic_labels(spec.n_classes);
  ifsed::SyntheticKnowledge knowledge = ifsed::make_synthetic_knowledge(labels, seed);
  {
    std::ofstream out(out_dir + "/frames.jsonl");
    for (const auto& id : knowledge.store.ids()) {
      const ifsed::Frame& f = *knowledge.store.find(id);
      out << ifsed::json{{"frame_id", f.frame_id},
                         {"definition", f.definition},
                         {"frame_elements", f.frame_elements},
                         {"lexical_units", f.lexical_units}}
                 .dump()
          << "\n";
    }
  }
  {
    std::ofstream out(out_dir + "/curated_map.tsv");
    for (const auto& [label, frame_id] : knowledge.curated_map) {
      out << label << "\t" << frame_id << "\n";
    }
  }

  std::cout << "wrote " << corpus.size() << " mentions, "
            << knowledge.store.size() << " frames to " << out_dir << "\n";
  return 0;
}
