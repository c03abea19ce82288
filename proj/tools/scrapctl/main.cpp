// scrapctl: command-line front end of the scrap acceptance pipeline.
//
// Exit codes: 0 ok, 2 configuration error, 3 data error, 4 model
// integrity error, 1 anything else.

#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "scrap/common/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"scrap acceptance pipeline"};
  app.require_subcommand(1);
  int rc = 0;

  scrapctl::SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "generate a synthetic unloading campaign");
  s->add_option("--config", sim.config, "campaign config (JSON)");
  s->add_option("--out", sim.out, "output directory")->required();
  s->add_option("--seed", sim.seed);
  s->add_option("--p-hot", sim.p_hot, "probability a layer carries 5x contamination");
  s->add_option("--feature-sigma", sim.feature_sigma);
  s->add_option("--split-counts", sim.split_counts, "train val test railcars")->expected(3);
  s->add_flag("--full-scale", sim.full_scale, "1504/305/223 railcars");
  s->callback([&] { rc = scrapctl::simulate(sim); });

  scrapctl::AnnotateArgs ann;
  auto* an = app.add_subcommand("annotate", "run the double-blind annotation workflow on a campaign");
  an->add_option("--campaign", ann.campaign)->required();
  an->add_option("--out", ann.out, "labels directory")->required();
  an->add_option("--config", ann.config);
  an->add_option("--seed", ann.seed);
  an->add_option("--salt", ann.salt, "pseudonymization salt");
  an->callback([&] { rc = scrapctl::annotate(ann); });

  scrapctl::TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a MIL or MTL model");
  t->add_option("--campaign", tr.campaign)->required();
  t->add_option("--labels", tr.labels, "labels directory (default: simulator ground truth)");
  t->add_option("--out", tr.out, "checkpoint path")->required();
  t->add_option("--config", tr.config, "training config (JSON)");
  t->add_option("--objective", tr.objective)->check(CLI::IsMember({"mil", "mtl"}));
  t->add_option("--pooling", tr.pooling)->check(CLI::IsMember({"attention", "mean"}));
  t->add_option("--lambda", tr.lambda, "classification loss weight");
  t->add_flag("--select-lambda", tr.select_lambda, "grid-search lambda on the validation split");
  t->add_option("--epochs", tr.epochs);
  t->add_option("--seed", tr.seed);
  t->add_option("--model-version", tr.version);
  t->add_option("--split-seed", tr.split_seed);
  t->callback([&] { rc = scrapctl::train(tr); });

  scrapctl::EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  e->add_option("--campaign", ev.campaign)->required();
  e->add_option("--labels", ev.labels);
  e->add_option("--model", ev.model)->required();
  e->add_option("--split", ev.split)->check(CLI::IsMember({"train", "val", "test"}));
  e->add_option("--out", ev.out, "EvalReport JSON");
  e->add_option("--csv", ev.csv, "EvalReport CSV");
  e->add_flag("--against-truth", ev.against_truth, "score against simulator ground truth");
  e->callback([&] { rc = scrapctl::eval(ev); });

  scrapctl::ServeArgs sv;
  auto* v = app.add_subcommand("serve", "run the pipeline service until SIGINT/SIGTERM");
  v->add_option("--model", sv.model)->required();
  v->add_option("--config", sv.config, "service config (JSON)");
  v->add_option("--data-dir", sv.data_dir);
  v->add_option("--host", sv.host);
  v->add_option("--port", sv.port, "0 picks a free port");
  v->add_option("--port-file", sv.port_file, "write the bound port here");
  v->add_option("--annotations", sv.annotations, "labels directory with an annotation snapshot");
  v->add_option("--retire", sv.retire, "model versions answered with 410");
  v->callback([&] { rc = scrapctl::serve(sv); });

  scrapctl::ReplayArgs rp;
  auto* r = app.add_subcommand("replay", "replay a campaign against a running service, one client per line");
  r->add_option("--campaign", rp.campaign)->required();
  r->add_option("--url", rp.url)->required();
  r->add_option("--model-version", rp.version);
  r->add_option("--chaos-seed", rp.chaos_seed, "deliver each message 1..max times");
  r->add_option("--max-deliveries", rp.max_deliveries);
  r->add_option("--out", rp.out, "summary JSON");
  r->callback([&] { rc = scrapctl::replay(rp); });

  scrapctl::ReportArgs rep;
  auto* rr = app.add_subcommand("report", "fetch railcar reports");
  rr->add_option("--url", rep.url)->required();
  rr->add_option("--railcar", rep.railcar, "one railcar (default: all)");
  rr->add_option("--out", rep.out, "JSONL output");
  rr->callback([&] { rc = scrapctl::report(rep); });

  scrapctl::ExportArgs ex;
  auto* x = app.add_subcommand("export", "write an immutable, versioned dataset snapshot");
  x->add_option("--tag", ex.tag)->required();
  x->add_option("--data-dir", ex.data_dir, "service data directory")->required();
  x->add_option("--labels", ex.labels, "labels directory")->required();
  x->add_option("--root", ex.root, "snapshot root")->required();
  x->add_option("--split-seed", ex.split_seed);
  x->add_option("--lines", ex.lines);
  x->callback([&] { rc = scrapctl::export_dataset(ex); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ok) {
    return app.exit(ok);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return 2;
  } catch (const scrap::ConfigError& err) {
    std::cerr << "config error: " << err.what() << '\n';
    return 2;
  } catch (const scrap::IntegrityError& err) {
    std::cerr << "integrity error: " << err.what() << '\n';
    return 4;
  } catch (const scrap::DataError& err) {
    std::cerr << "data error: " << err.what() << '\n';
    return 3;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return rc;
}
