from config import run_analysis, upload_results


if __name__ == "__main__":
    reports, current_dir = run_analysis()
    upload_results(current_dir)
