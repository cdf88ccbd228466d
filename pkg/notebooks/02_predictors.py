# %% [markdown]
# # Next-day predictors: LSTM and a feedforward baseline
#
# Inputs per day are the standardized market variables, the turbulent-state
# probability and the current crisis label. A window of `l` days predicts
# whether the following day is a crisis day.
#
# This script labels the whole sample once and trains on the first 70%, which
# is the static counterpart of the recursive loop in `03_recursive_warning.py`.

# %%
from stockews.evaluation import metrics_report, onset_analysis
from stockews.neural import LstmNetwork, MlpNetwork, TrainConfig, fit_network, parameter_count
from stockews.pipeline import EwsConfig, label_panel, predictor_dataset
from stockews.synthetic import synthetic_panel

panel = synthetic_panel(length=1200, seed=4)
cfg = EwsConfig(window=5, starts=3, train=TrainConfig(epochs=40))
print(panel.names)

# %%
labeled = label_panel(panel, cfg)
X, y, _ = predictor_dataset(panel, labeled, cfg)
split = int(round(len(panel) * cfg.split))
X_train, y_train = X[: split - cfg.window], y[: split - cfg.window]
X_test, y_test = X[split:], y[split:]
print(f"cutoff {labeled.cutoff:.2f}; windows {X.shape}; inputs per day {X.shape[2]}")
print("LSTM parameters:", parameter_count(X.shape[2], cfg.train.hidden))

# %% [markdown]
# ## Training
#
# Plain mini-batch gradient descent on binary cross-entropy, with the gradient
# norm clipped at 5.

# %%
lstm = fit_network(LstmNetwork(X.shape[2], cfg.train.hidden, seed=cfg.train.seed), X_train, y_train, cfg.train)
bpnn = fit_network(MlpNetwork(X.shape[2], cfg.train.hidden, window=cfg.window, seed=cfg.train.seed),
                   X_train, y_train, cfg.train)
print(f"LSTM loss {lstm.loss_history[0]:.4f} -> {lstm.loss_history[-1]:.4f}")

# %% [markdown]
# ## Test-range scores at the crisis cutoff

# %%
for name, net in (("LSTM", lstm), ("BPNN", bpnn)):
    p = net.predict(X_test)
    rep = metrics_report(y_test.astype(int), p, cutoff=labeled.cutoff)
    on = onset_analysis(y_test.astype(int), (p >= labeled.cutoff).astype(int), horizon=5)
    print(f"{name}: accuracy {rep.accuracy:.3f}  auc {rep.auc:.3f}  bce {rep.bce_loss:.3f}  sar {rep.sar:.3f}  "
          f"onsets {on.predicted_onsets}/{on.total_onsets}")
