"""Scratch harness for fixture/policy tuning (not part of the package)."""
import dataclasses, statistics, math, random, sys, time
from concurrent.futures import ProcessPoolExecutor
from gearsearch.landscape import load_landscape, enumerate_genomes, evaluate
from gearsearch.engine import RunConfig, PolicyKind, run_search
from gearsearch.policy import PolicyConfig, GuardToggles
from gearsearch.model import Crash, Success, OperatorKind
from gearsearch.logio import log_from_result
from gearsearch.report import report_running_best

LS = load_landscape('ladder')
LS0 = dataclasses.replace(LS, noise_sd=0.0)
_rng = random.Random(0)
OPT = min(v.bpb for v in (evaluate(g, LS0, _rng) for g in enumerate_genomes(LS0.knobs))
          if not isinstance(v, Crash))

def one_seed(args):
    s, pol_kw = args
    pol = PolicyConfig(**pol_kw)
    off = dataclasses.replace(pol, guards=GuardToggles(False, False, False, False, False, False))
    rg = run_search(RunConfig(PolicyKind.GEAR_FIXED, 100, s, LS, pol))
    rh = run_search(RunConfig(PolicyKind.HILLCLIMB, 100, s, LS, pol))
    sg = report_running_best(log_from_result(rg))
    sh = report_running_best(log_from_result(rh))
    flat = lambda q: round(q.improvement_mbpb, 2) == 0.0
    xo = [r for r in rg.records if r.operator is OperatorKind.CROSSOVER]
    ro = run_search(RunConfig(PolicyKind.GEAR_FIXED, 100, s, LS, off))
    xo_off = [r for r in ro.records if r.operator is OperatorKind.CROSSOVER]
    rg0 = run_search(RunConfig(PolicyKind.GEAR_FIXED, 100, s, LS0, pol))
    rh0 = run_search(RunConfig(PolicyKind.HILLCLIMB, 100, s, LS0, pol))
    bg0 = min((r.outcome.metrics.bpb for r in rg0.records if isinstance(r.outcome, Success)), default=9)
    bh0 = min((r.outcome.metrics.bpb for r in rh0.records if isinstance(r.outcome, Success)), default=9)
    return dict(
        gear_final=sg.final_best, hc_final=sh.final_best,
        gear_flat=flat(sg.quarters[2]) and flat(sg.quarters[3]),
        hc_flat=flat(sh.quarters[2]) and flat(sh.quarters[3]),
        xo_on=len(xo), di_on=len({frozenset((r.parent1, r.parent2)) for r in xo}),
        xo_off=len(xo_off), di_off=len({frozenset((r.parent1, r.parent2)) for r in xo_off}),
        gear_hit=bg0 <= OPT + 1e-12, hc_hit=bh0 <= OPT + 1e-12,
    )

def evaluate_policy(pol_kw, seeds=range(1, 51), workers=8):
    with ProcessPoolExecutor(workers) as pool:
        rows = list(pool.map(one_seed, [(s, pol_kw) for s in seeds]))
    wins = sum(1 for r in rows if r['gear_final'] < r['hc_final'])
    losses = sum(1 for r in rows if r['gear_final'] > r['hc_final'])
    n = wins + losses
    p = sum(math.comb(n, k) for k in range(wins, n + 1)) / 2 ** n if n else 1.0
    med = lambda key: statistics.median(r[key] for r in rows)
    pct = lambda key: 100 * sum(r[key] for r in rows) // len(rows)
    r_on = med('di_on') / med('xo_on')
    r_off = med('di_off') / med('xo_off')
    return dict(
        sign_p=p, gear_med=med('gear_final'), hc_med=med('hc_final'),
        flat_diff=pct('hc_flat') - pct('gear_flat'),
        hit_gear=pct('gear_hit'), hit_hc=pct('hc_hit'),
        ratio_on=round(r_on, 3), ratio_off=round(r_off, 3), drop=round(r_on - r_off, 3),
        xo_on=med('xo_on'), xo_off=med('xo_off'), di_off=med('di_off'),
    )

if __name__ == '__main__':
    import json
    kw = json.loads(sys.argv[1]) if len(sys.argv) > 1 else {}
    t0 = time.time()
    out = evaluate_policy(kw)
    out['secs'] = round(time.time() - t0, 1)
    ok = (out['sign_p'] < 0.05 and out['flat_diff'] >= 25 and out['hit_gear'] >= 60
          and out['hit_hc'] <= 20 and out['ratio_on'] >= 0.8 and out['drop'] >= 0.2)
    print(('PASS ' if ok else 'FAIL '), json.dumps(out))
