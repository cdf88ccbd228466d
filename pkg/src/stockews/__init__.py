"""Early warning of stock-market turbulence.

SWARCH volatility regimes identify turbulent days, a two-peak histogram
cutoff turns filtering probabilities into crisis labels, and a windowed LSTM
warns of the next day's state.
"""

__version__ = "0.1.0"

from .backtest import BacktestResult, run_backtest
from .data import FeaturePanel, PriceSeries, ReturnSeries, align_panel, load_price_panel, log_returns, realized_volatility
from .evaluation import (
    ConfusionMatrix,
    MetricsReport,
    OnsetReport,
    accuracy,
    bce_loss,
    confusion,
    kfold_cv,
    onset_analysis,
    roc_auc,
    sar,
    tpr_fpr,
)
from .neural import LstmNetwork, MlpNetwork, TrainConfig, parameter_count, train_lstm, train_mlp
from .pipeline import EwsConfig, WarningRecord, run_ews, split_train_test
from .regime import (
    FilterOutput,
    SimulatedPath,
    SwarchParams,
    ergodic_distribution,
    estimate_swarch,
    hamilton_filter,
    simulate_swarch,
)
from .threshold import CrisisSeries, cmax_labels, cutoff_statistics, label_crises, two_peak_cutoff
