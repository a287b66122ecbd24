"""Seeded generator of Store-Sales-shaped raw competition files."""

import datetime
import logging
from typing import Dict, Iterable, Optional

import numpy as np
import pandas as pd

from .table import format_csv

logger = logging.getLogger(__name__)

FAMILIES = (
    "AUTOMOTIVE", "BABY CARE", "BEAUTY", "BEVERAGES", "BOOKS", "BREAD/BAKERY", "CELEBRATION", "CLEANING",
    "DAIRY", "DELI", "EGGS", "FROZEN FOODS", "GROCERY I", "GROCERY II", "HARDWARE", "HOME AND KITCHEN I",
    "HOME AND KITCHEN II", "HOME APPLIANCES", "HOME CARE", "LADIESWEAR", "LAWN AND GARDEN", "LINGERIE",
    "LIQUOR,WINE,BEER", "MAGAZINES", "MEATS", "PERSONAL CARE", "PET SUPPLIES", "PLAYERS AND ELECTRONICS",
    "POULTRY", "PREPARED FOODS", "PRODUCE", "SCHOOL AND OFFICE SUPPLIES", "SEAFOOD",
)

DEFAULT_START = datetime.date(2017, 1, 1)
DEFAULT_END = datetime.date(2017, 8, 15)
OIL_EXTRA_DAYS = 15  # oil prices run past the competition window, like the original file

WEEKLY_PROFILE = np.array([0.9, 0.85, 0.9, 0.95, 1.05, 1.3, 1.25])  # Monday first
PROMO_LIFT = 0.15
OIL_GAP_RATE = 0.05

HOLIDAYS = (
    ("2017-01-01", "Holiday", "National", "Ecuador", "Primer dia del ano"),
    ("2017-04-14", "Holiday", "National", "Ecuador", "Viernes Santo"),
    ("2017-05-01", "Holiday", "National", "Ecuador", "Dia del Trabajo"),
    ("2017-05-24", "Holiday", "National", "Ecuador", "Batalla de Pichincha"),
    ("2017-08-10", "Holiday", "National", "Ecuador", "Primer Grito de Independencia"),
    ("2017-12-25", "Holiday", "National", "Ecuador", "Navidad"),
)


def _train(rng, dates: pd.DatetimeIndex, stores, families) -> pd.DataFrame:
    frames = []
    weekday = WEEKLY_PROFILE[dates.dayofweek.to_numpy()]
    for store in stores:
        store_scale = rng.uniform(0.6, 1.4)
        for family in families:
            # some families barely sell, which keeps plenty of zeros in the data
            base = float(rng.lognormal(mean=2.5, sigma=1.5)) * store_scale
            if rng.random() < 0.15:
                base *= 0.02
            promo = rng.binomial(3, 0.1, size=len(dates))
            lam = base * weekday * (1.0 + PROMO_LIFT * promo)
            frames.append(pd.DataFrame({
                "date": dates,
                "store_nbr": store,
                "family": family,
                "sales": rng.poisson(lam).astype("float64"),
                "onpromotion": promo,
            }))
    train = pd.concat(frames, ignore_index=True)
    train = train.sort_values(["date", "store_nbr", "family"], kind="mergesort").reset_index(drop=True)
    train.insert(0, "id", np.arange(len(train)))
    train["date"] = train["date"].dt.strftime("%Y-%m-%d")
    return train


def _oil(rng, start: datetime.date, end: datetime.date) -> pd.DataFrame:
    days = pd.bdate_range(start, end + datetime.timedelta(days=OIL_EXTRA_DAYS))
    price = 52.0 + np.cumsum(rng.normal(0.0, 0.6, size=len(days)))
    price = np.round(price, 2)
    price[rng.random(len(days)) < OIL_GAP_RATE] = np.nan
    return pd.DataFrame({"date": days.strftime("%Y-%m-%d"), "dcoilwtico": price})


def _transactions(rng, dates: pd.DatetimeIndex, stores) -> pd.DataFrame:
    frames = [
        pd.DataFrame({
            "date": dates.strftime("%Y-%m-%d"),
            "store_nbr": store,
            "transactions": rng.poisson(1500, size=len(dates)),
        })
        for store in stores
    ]
    return pd.concat(frames, ignore_index=True).sort_values(["date", "store_nbr"], kind="mergesort")


def _stores(rng, stores) -> pd.DataFrame:
    return pd.DataFrame({
        "store_nbr": list(stores),
        "city": "Quito",
        "state": "Pichincha",
        "type": [str(t) for t in rng.choice(list("ABCDE"), size=len(stores))],
        "cluster": rng.integers(1, 18, size=len(stores)),
    })


def generate_store_sales(
    seed: int,
    stores: Iterable[int] = range(1, 6),
    family_count: int = len(FAMILIES),
    start: datetime.date = DEFAULT_START,
    end: datetime.date = DEFAULT_END,
    families: Optional[Iterable[str]] = None,
) -> Dict[str, bytes]:
    """Generate raw ``train.csv`` and companion tables from ``seed``.

    Every series is a Poisson draw around a per-entity level with a weekly
    profile and a promotion lift; equal seeds give byte-identical files.
    """
    rng = np.random.default_rng(seed)
    stores = sorted(set(stores))
    families = sorted(families) if families is not None else sorted(FAMILIES[:family_count])
    dates = pd.date_range(start, end, freq="D")
    holidays = pd.DataFrame(HOLIDAYS, columns=["date", "type", "locale", "locale_name", "description"])
    holidays["transferred"] = "False"

    files = {
        "train.csv": format_csv(_train(rng, dates, stores, families)),
        "oil.csv": format_csv(_oil(rng, start, end)),
        "holidays_events.csv": format_csv(holidays),
        "transactions.csv": format_csv(_transactions(rng, dates, stores)),
        "stores.csv": format_csv(_stores(rng, stores)),
    }
    logger.debug(f"synthetic fixture: {len(stores)} stores x {len(families)} families, {len(dates)} days")
    return files
