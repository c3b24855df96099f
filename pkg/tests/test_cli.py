import json

import pandas as pd
import pytest

from app import EXIT_OK, EXIT_USAGE, EXIT_VIOLATIONS, build_parser, main

TINY_INI = """
[grid]
width = 3
height = 3
gamma = 0.9

[data]
n_source = 120
n_target = 60
horizon = 20

[droco]
steps = 30
batch_src = 16
batch_tar = 16
n_members = 3

[eval]
perturb = kinematic:hard
seeds = 0

[sweep]
betas = 0.5, 1.0
seeds = 0
"""


@pytest.fixture
def ini(tmp_path):
    path = tmp_path / 'tiny.ini'
    path.write_text(TINY_INI)
    return str(path)


@pytest.fixture
def data_dir(tmp_path, ini):
    out = tmp_path / 'data'
    assert main(['gen-data', '--config', ini, '--seed', '0', '--out', str(out)]) == EXIT_OK
    return out


def test_gen_data_counts(tmp_path, ini, capsys):
    out = tmp_path / 'gen'
    code = main(['gen-data', '--config', ini, '--n', '200', '--n-target', '40', '--seed', '1', '--out', str(out)])
    assert code == EXIT_OK
    assert len((out / 'src.jsonl').read_text().splitlines()) == 200
    assert len((out / 'tar.jsonl').read_text().splitlines()) == 40
    assert "source records: 200" in capsys.readouterr().out


def test_gen_data_reproducible(tmp_path, ini):
    for name in ('a', 'b'):
        main(['gen-data', '--config', ini, '--seed', '3', '--out', str(tmp_path / name)])
    for filename in ('src.jsonl', 'tar.jsonl', 'mdp_src.json', 'mdp_tar.json'):
        assert (tmp_path / 'a' / filename).read_bytes() == (tmp_path / 'b' / filename).read_bytes()


def test_gen_data_without_shift(tmp_path, ini):
    out = tmp_path / 'same'
    main(['gen-data', '--config', ini, '--shift', 'none', '--out', str(out)])
    src = json.loads((out / 'mdp_src.json').read_text())
    tar = json.loads((out / 'mdp_tar.json').read_text())
    assert src['kernel'] == tar['kernel']


def test_train_zero_steps(tmp_path, ini, data_dir):
    out = tmp_path / 'zero'
    assert main(['train', '--config', ini, '--data', str(data_dir), '--steps', '0', '--out', str(out)]) == EXIT_OK
    state = json.loads((out / 'checkpoint.json').read_text())['state']
    assert all(value == 0.0 for row in state['q'] for value in row)
    assert (out / 'loss.csv').is_file()


def test_train_identity_check(tmp_path, ini, data_dir, capsys):
    code = main(['train', '--config', ini, '--data', str(data_dir), '--beta', '1.0', '--check-identity',
                 '--out', str(tmp_path / 'identity')])
    assert code == EXIT_OK
    assert "identity gap" in capsys.readouterr().out


def test_identity_check_flags_offset_penalty(tmp_path, ini, data_dir, monkeypatch):
    import droco.trainer as trainer_module

    original = trainer_module.value_penalties
    monkeypatch.setattr(trainer_module, 'value_penalties',
                        lambda batch, v, samples: original(batch, v, samples) + batch.is_src)
    code = main(['train', '--config', ini, '--data', str(data_dir), '--beta', '1.0', '--check-identity',
                 '--steps', '5', '--out', str(tmp_path / 'identity')])
    assert code == EXIT_VIOLATIONS


def test_identity_check_needs_beta_one(tmp_path, ini, data_dir):
    code = main(['train', '--config', ini, '--data', str(data_dir), '--beta', '0.5', '--check-identity',
                 '--out', str(tmp_path / 'identity')])
    assert code == EXIT_USAGE


def test_train_baseline_checkpoint(tmp_path, ini, data_dir):
    out = tmp_path / 'baseline'
    assert main(['train', '--config', ini, '--data', str(data_dir), '--baseline', '--out', str(out)]) == EXIT_OK
    saved = json.loads((out / 'checkpoint.json').read_text())
    assert saved['config']['beta'] == 0.0
    assert saved['config']['loss_kind'] == 'l2'
    assert saved['state']['ensemble'] is None


def test_train_missing_data_dir(tmp_path, ini, capsys):
    assert main(['train', '--config', ini, '--data', str(tmp_path / 'nowhere')]) == EXIT_USAGE
    assert "not found" in capsys.readouterr().err


def test_train_malformed_dataset(tmp_path, ini, data_dir, capsys):
    with open(data_dir / 'tar.jsonl', 'a') as f:
        f.write('{"s": 0}\n')
    assert main(['train', '--config', ini, '--data', str(data_dir), '--out', str(tmp_path / 'x')]) == EXIT_USAGE
    assert "line 61" in capsys.readouterr().err


class TestEval:
    @pytest.fixture
    def checkpoint(self, tmp_path, ini, data_dir):
        out = tmp_path / 'droco'
        main(['train', '--config', ini, '--data', str(data_dir), '--out', str(out)])
        return out / 'checkpoint.json'

    def test_clean_only(self, tmp_path, ini, data_dir, checkpoint):
        out = tmp_path / 'eval'
        code = main(['eval', '--config', ini, '--checkpoint', str(checkpoint), '--data', str(data_dir),
                     '--perturb', 'none', '--seeds', '0,1', '--out', str(out)])
        assert code == EXIT_OK
        frame = pd.read_csv(out / 'eval.csv')
        assert len(frame) == 2
        assert set(frame['condition']) == {'clean'}

    def test_zero_scale_attack(self, tmp_path, ini, data_dir, checkpoint):
        out = tmp_path / 'eval'
        main(['eval', '--config', ini, '--checkpoint', str(checkpoint), '--data', str(data_dir),
              '--perturb', 'minq:0.0', 'kinematic:hard', '--seeds', '0', '--out', str(out)])
        frame = pd.read_csv(out / 'eval.csv')
        assert len(frame) == 3
        attack = frame[frame['condition'] == 'min_v_adversarial']
        assert attack['degradation_pct'].abs().max() < 1e-9

    def test_missing_checkpoint(self, tmp_path, ini):
        assert main(['eval', '--config', ini, '--checkpoint', str(tmp_path / 'absent.json')]) == EXIT_USAGE

    def test_bad_perturbation(self, tmp_path, ini, data_dir, checkpoint):
        code = main(['eval', '--config', ini, '--checkpoint', str(checkpoint), '--data', str(data_dir),
                     '--perturb', 'warp:easy', '--out', str(tmp_path / 'eval')])
        assert code == EXIT_USAGE


def test_verify_passes(tmp_path):
    out = tmp_path / 'verify'
    assert main(['verify', '--prop', 'identities', 'dual', '--trials', '2', '--out', str(out)]) == EXIT_OK
    summary = json.loads((out / 'verify_summary.json').read_text())
    assert summary['passed'] is True
    assert [r['prop'] for r in summary['results']] == ['dual', 'identities']


def test_verify_reports_violations(tmp_path, monkeypatch):
    from verify import checks
    monkeypatch.setattr(checks, 'huber', lambda a, delta: 0.0)
    assert main(['verify', '--prop', 'identities', '--trials', '1', '--out', str(tmp_path)]) == EXIT_VIOLATIONS


def test_verify_unknown_prop(tmp_path):
    assert main(['verify', '--prop', 'prop9', '--out', str(tmp_path)]) == EXIT_USAGE


def test_sweep_rows(tmp_path, ini):
    out = tmp_path / 'sweep'
    assert main(['sweep', '--config', ini, '--n-members', '3', '--out', str(out)]) == EXIT_OK
    frame = pd.read_csv(out / 'sweep.csv')
    assert list(frame['beta']) == [0.5, 1.0]
    assert (frame['status'] == 'ok').all()


def test_sweep_empty_grid(tmp_path, ini):
    assert main(['sweep', '--config', ini, '--betas', '', '--out', str(tmp_path)]) == EXIT_USAGE


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
