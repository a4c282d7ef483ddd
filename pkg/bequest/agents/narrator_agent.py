import logging
from typing import Dict, Optional

import pandas as pd

logger = logging.getLogger(__name__)


class NarratorAgent:
    def summarize_report(self, df: pd.DataFrame) -> Dict:
        summary = {
            "Total Checks": len(df),
            "Passed": int(df["passed"].sum()),
            "Failed": int((~df["passed"].astype(bool)).sum()),
        }

        logger.info("📊 Verification Summary:")
        for k, v in summary.items():
            logger.info(f"{k}: {v}")
        failed = self.first_failure(df)
        if failed is not None:
            logger.error(f"❌ First failing check: {failed}")
        return summary

    def first_failure(self, df: pd.DataFrame) -> Optional[str]:
        failed = df.loc[~df["passed"].astype(bool), "check"]
        return None if failed.empty else str(failed.iloc[0])

    def render(self, df: pd.DataFrame) -> str:
        """Plain-text table, failing checks first."""
        ordered = df.assign(_failed=~df["passed"].astype(bool))
        ordered = ordered.sort_values("_failed", ascending=False, kind="mergesort").drop(columns="_failed")
        return ordered.to_string(index=False, float_format=lambda x: f"{x:.3e}")
