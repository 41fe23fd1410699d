"""Command-line behavior: config resolution, artifacts, determinism."""

import json
import random

import pytest

from nonce_lab.cli import derive_seed, main, resolve_config, build_parser
from nonce_lab.ecdsa import keygen, read_private_key, sign, write_private_key, write_signatures


def run_cli(*argv):
    return main([str(a) for a in argv])


def write_config(path, **values):
    path.write_text(json.dumps(values))
    return str(path)


@pytest.fixture()
def toy_sim_config(tmp_path):
    return write_config(
        tmp_path / "sim.json",
        samples_per_event=16,
        noise_sigma=1.0,
        count=80,
        word_count=4,
    )


class TestConfigResolution:
    def parse(self, *argv):
        return build_parser().parse_args([str(a) for a in argv])

    def test_defaults(self):
        rc = resolve_config(self.parse("keygen"))
        assert rc.curve == "secp521r1"
        assert rc.variant == "plain"
        assert rc.seed == 0
        assert rc.jobs == 1
        assert rc.out == "out-keygen"

    def test_flags_override_file(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", curve="toy16", seed=11, count=5)
        rc = resolve_config(self.parse("keygen", "--config", cfg, "--seed", 99))
        assert rc.curve == "toy16"
        assert rc.seed == 99
        assert rc.count == 5

    def test_env_seed_fallback(self, monkeypatch, tmp_path):
        monkeypatch.setenv("NONCE_LAB_SEED", "321")
        rc = resolve_config(self.parse("keygen"))
        assert rc.seed == 321
        # Config file beats the environment.
        cfg = write_config(tmp_path / "c.json", seed=7)
        rc = resolve_config(self.parse("keygen", "--config", cfg))
        assert rc.seed == 7
        monkeypatch.setenv("NONCE_LAB_SEED", "junk")
        with pytest.raises(Exception):
            resolve_config(self.parse("keygen"))

    def test_unknown_keys_rejected(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", noise_sgima=1.0)
        assert run_cli("keygen", "--config", cfg, "--out", tmp_path / "o") == 1
        err = capsys.readouterr().err
        assert "error: config:" in err
        assert "noise_sgima" in err

    def test_bad_value_rejected(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", variant="stealth")
        assert run_cli("keygen", "--config", cfg) == 1
        assert "variant" in capsys.readouterr().err

    def test_malformed_json_rejected(self, tmp_path, capsys):
        path = tmp_path / "c.json"
        path.write_text("{nope")
        assert run_cli("keygen", "--config", str(path)) == 1
        assert "error: config:" in capsys.readouterr().err

    def test_derive_seed_is_stable_and_labeled(self):
        assert derive_seed(1, "a") == derive_seed(1, "a")
        assert derive_seed(1, "a") != derive_seed(1, "b")
        assert derive_seed(1, "a") != derive_seed(2, "a")
        assert 0 <= derive_seed(0, "x") < 2**64


class TestKeySignVerify:
    def test_round_trip(self, tmp_path, toy, capsys):
        kg = tmp_path / "kg"
        assert run_cli("keygen", "--curve", "toy16", "--seed", 5, "--out", kg) == 0
        key = read_private_key(kg / "key.txt", toy)
        assert 1 <= key.d < toy.n

        sg = tmp_path / "sg"
        assert run_cli(
            "sign", "--key", kg / "key.txt", "--curve", "toy16",
            "--seed", 5, "--count", 3, "--out", sg,
        ) == 0
        assert run_cli(
            "verify", "--key", kg / "key.txt",
            "--signatures", sg / "signatures.txt", "--curve", "toy16",
        ) == 0

    def test_verify_flags_forgery(self, tmp_path, toy, rng, capsys):
        key = keygen(toy, rng)
        other = keygen(toy, rng)
        sig, _ = sign(17, other, rng)
        write_private_key(tmp_path / "key.txt", key)
        write_signatures(tmp_path / "sigs.txt", [sig])
        assert run_cli(
            "verify", "--key", tmp_path / "key.txt",
            "--signatures", tmp_path / "sigs.txt", "--curve", "toy16",
        ) == 2
        assert "INVALID" in capsys.readouterr().out

    def test_keygen_is_deterministic(self, tmp_path, toy):
        for name in ("a", "b"):
            run_cli("keygen", "--curve", "toy16", "--seed", 8, "--out", tmp_path / name)
        assert (tmp_path / "a/key.txt").read_bytes() == (tmp_path / "b/key.txt").read_bytes()


class TestSimulatePipeline:
    def test_simulate_assess_train_classify(self, tmp_path, toy_sim_config, capsys):
        sim = tmp_path / "sim"
        assert run_cli(
            "simulate", "--config", toy_sim_config, "--curve", "toy16",
            "--seed", 9, "--out", sim,
        ) == 0
        assert (sim / "traces.trc").exists()
        assert (sim / "traces.labels.csv").exists()
        assert json.loads((sim / "config.json").read_text())["command"] == "simulate"

        assert run_cli(
            "assess", "--traces", sim / "traces.trc",
            "--config", toy_sim_config, "--out", tmp_path / "assess",
        ) == 0
        out = capsys.readouterr().out
        assert "verdict=LEAKING" in out
        assert (tmp_path / "assess/tvla.csv").read_text().startswith("sample_index,t_value")

        assert run_cli(
            "train", "--traces", sim / "traces.trc",
            "--config", toy_sim_config, "--out", tmp_path / "train",
        ) == 0
        assert run_cli(
            "classify", "--traces", sim / "traces.trc",
            "--model", tmp_path / "train/model.tmpl",
            "--config", toy_sim_config, "--out", tmp_path / "cls",
        ) == 0
        out = capsys.readouterr().out
        assert "accuracy=1.0000" in out
        lines = (tmp_path / "cls/predictions.csv").read_text().splitlines()
        assert lines[0] == "window_index,cond_guess,probability,label"
        assert len(lines) == 81

    def test_simulate_byte_identical_across_jobs(self, tmp_path, toy_sim_config):
        for name, jobs in (("one", 1), ("two", 2)):
            assert run_cli(
                "simulate", "--config", toy_sim_config, "--curve", "toy16",
                "--seed", 9, "--jobs", jobs, "--out", tmp_path / name,
            ) == 0
        for artifact in ("traces.trc", "traces.labels.csv"):
            assert (tmp_path / "one" / artifact).read_bytes() == (
                tmp_path / "two" / artifact
            ).read_bytes()

    def test_missing_traces_file_is_io_error(self, tmp_path, capsys):
        assert run_cli(
            "assess", "--traces", tmp_path / "absent.trc", "--out", tmp_path / "o",
        ) == 1
        assert "error: io:" in capsys.readouterr().err


class TestAttack:
    def attack_config(self, tmp_path, **extra):
        values = dict(
            samples_per_event=16, noise_sigma=0.0, train_count=24,
            curve="toy16", variant="plain", seed=4,
        )
        values.update(extra)
        return write_config(tmp_path / "atk.json", **values)

    def test_noiseless_attack_recovers_key(self, tmp_path, capsys):
        cfg = self.attack_config(tmp_path)
        out = tmp_path / "atk"
        assert run_cli("attack", "--config", cfg, "--out", out) == 0
        stdout = capsys.readouterr().out
        assert "nonce bits correct: 17/17" in stdout
        assert "private key recovered: yes" in stdout
        summary = json.loads((out / "summary.json").read_text())
        assert summary["key_recovered"] is True
        assert summary["bits_correct"] == summary["bits_total"] == 17
        header = (out / "attack.csv").read_text().splitlines()[0]
        assert header == "window_index,cond_guess,cond_true,bit_guess,bit_true,probability"

    def test_attack_outputs_byte_identical(self, tmp_path):
        cfg = self.attack_config(tmp_path)
        blobs = []
        for _ in range(2):
            out = tmp_path / "run"
            assert run_cli("attack", "--config", cfg, "--out", out) == 0
            blobs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
            for p in out.iterdir():
                p.unlink()
            out.rmdir()
        assert blobs[0].keys() == blobs[1].keys()
        for name in blobs[0]:
            assert blobs[0][name] == blobs[1][name], name

    def test_attack_with_pretrained_model(self, tmp_path):
        cfg = self.attack_config(tmp_path)
        first = tmp_path / "first"
        assert run_cli("attack", "--config", cfg, "--out", first) == 0
        again = tmp_path / "again"
        assert run_cli(
            "attack", "--config", cfg, "--model", first / "model.tmpl",
            "--out", again,
        ) == 0
        assert not (again / "model.tmpl").exists()
        assert (again / "summary.json").read_bytes() == (
            first / "summary.json"
        ).read_bytes()

    def test_attack_daa_multiplier(self, tmp_path):
        cfg = self.attack_config(tmp_path, multiplier="daa")
        assert run_cli("attack", "--config", cfg, "--out", tmp_path / "daa") == 0


class TestRecoverCommand:
    def test_recover_from_files(self, tmp_path, toy, capsys):
        rng = random.Random(11)
        key = keygen(toy, rng)
        write_private_key(tmp_path / "key.txt", key)
        sigs, lines = [], []
        for _ in range(3):
            sig, nonce = sign(rng.randrange(1, toy.n), key, rng)
            sigs.append(sig)
            lines.append(f"a={nonce.k.value % 4096:x}")
        write_signatures(tmp_path / "sigs.txt", sigs)
        (tmp_path / "known.txt").write_text("\n".join(lines) + "\n")
        assert run_cli(
            "recover", "--signatures", tmp_path / "sigs.txt",
            "--known", tmp_path / "known.txt", "--key", tmp_path / "key.txt",
            "--leak-bits", 12, "--curve", "toy16", "--out", tmp_path / "rec",
        ) == 0
        assert f"recovered d={key.d:x}" in capsys.readouterr().out
        assert (tmp_path / "rec/recovered.txt").read_text() == f"d={key.d:x}\n"

    def test_recovery_failure_exits_2(self, tmp_path, toy, capsys):
        rng = random.Random(12)
        key = keygen(toy, rng)
        write_private_key(tmp_path / "key.txt", key)
        sig, nonce = sign(55, key, rng)
        write_signatures(tmp_path / "sigs.txt", [sig])
        (tmp_path / "known.txt").write_text(f"a={nonce.k.value & 1:x}\n")
        assert run_cli(
            "recover", "--signatures", tmp_path / "sigs.txt",
            "--known", tmp_path / "known.txt", "--key", tmp_path / "key.txt",
            "--leak-bits", 1, "--curve", "toy16", "--out", tmp_path / "rec",
        ) == 2
        assert "error: recovery:" in capsys.readouterr().err

    def test_leak_bits_required(self, tmp_path, toy, capsys):
        rng = random.Random(13)
        key = keygen(toy, rng)
        write_private_key(tmp_path / "key.txt", key)
        sig, nonce = sign(55, key, rng)
        write_signatures(tmp_path / "sigs.txt", [sig])
        (tmp_path / "known.txt").write_text(f"a={nonce.k.value % 16:x}\n")
        assert run_cli(
            "recover", "--signatures", tmp_path / "sigs.txt",
            "--known", tmp_path / "known.txt", "--key", tmp_path / "key.txt",
            "--curve", "toy16", "--out", tmp_path / "rec",
        ) == 1
        assert "leak_bits" in capsys.readouterr().err


class TestExperimentCommand:
    def grid_config(self, tmp_path):
        return write_config(
            tmp_path / "grid.json",
            curve="toy16",
            grid_leak_bits=[12],
            grid_signatures=[3],
            grid_error_rates=[0.0, 1.0],
            trials=4,
        )

    def test_grid_csv(self, tmp_path, capsys):
        cfg = self.grid_config(tmp_path)
        out = tmp_path / "exp"
        assert run_cli("experiment", "--config", cfg, "--seed", 2, "--out", out) == 0
        lines = (out / "results.csv").read_text().splitlines()
        assert lines[0] == "leak_bits,signatures,error_rate,trials,successes"
        assert lines[1] == "12,3,0,4,4"
        assert lines[2] == "12,3,1,4,0"
        assert (out / "timing.txt").exists()

    def test_grid_byte_identical_across_jobs(self, tmp_path):
        cfg = self.grid_config(tmp_path)
        for name, jobs in (("one", 1), ("two", 2)):
            assert run_cli(
                "experiment", "--config", cfg, "--seed", 2,
                "--jobs", jobs, "--out", tmp_path / name,
            ) == 0
        assert (tmp_path / "one/results.csv").read_bytes() == (
            tmp_path / "two/results.csv"
        ).read_bytes()
